//! Real trigonometric polynomials on the unit torus `[0,1)^d`.
//!
//! A field is `c + Σ a·cos(2π m·x) + b·sin(2π m·x)` over integer wave vectors
//! `m`. Values, gradients and Hessians are exact, and every field is periodic
//! with period one in each coordinate.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierTerm {
    pub wave: Vec<i32>,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FourierField {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub terms: Vec<FourierTerm>,
}

impl FourierField {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            terms: Vec::new(),
        }
    }

    /// Adds `a cos(2π m·x) + b sin(2π m·x)`.
    pub fn with_term(mut self, wave: &[i32], cos: f64, sin: f64) -> Self {
        self.terms.push(FourierTerm {
            wave: wave.to_vec(),
            cos,
            sin,
        });
        self
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.terms.iter().all(|t| t.cos == 0.0 && t.sin == 0.0)
    }

    /// True when no term depends on coordinate `axis`.
    pub fn independent_of(&self, axis: usize) -> bool {
        self.terms
            .iter()
            .all(|t| t.wave.get(axis).copied().unwrap_or(0) == 0 || (t.cos == 0.0 && t.sin == 0.0))
    }

    pub fn check_dim(&self, dim: usize) -> bool {
        self.terms.iter().all(|t| t.wave.len() == dim)
    }

    /// Sum of absolute Fourier amplitudes, an upper bound for `sup |f - c|`.
    pub fn amplitude_bound(&self) -> f64 {
        self.terms.iter().map(|t| t.cos.hypot(t.sin)).sum()
    }

    fn phase(wave: &[i32], x: &[f64]) -> f64 {
        // reduce each product modulo one before scaling so that lifted
        // points far out in the cover evaluate identically to their base
        let mut p = 0.0;
        for (m, xi) in wave.iter().zip(x) {
            let t = *m as f64 * xi;
            p += t - t.floor();
        }
        TAU * (p - p.floor())
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mut acc = self.constant;
        for t in &self.terms {
            let (s, c) = Self::phase(&t.wave, x).sin_cos();
            acc += t.cos * c + t.sin * s;
        }
        acc
    }

    /// Value and gradient, written into `grad` (length d).
    pub fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut acc = self.constant;
        for t in &self.terms {
            let (s, c) = Self::phase(&t.wave, x).sin_cos();
            acc += t.cos * c + t.sin * s;
            let dphase = -t.cos * s + t.sin * c;
            for (g, m) in grad.iter_mut().zip(&t.wave) {
                *g += TAU * *m as f64 * dphase;
            }
        }
        acc
    }

    /// Value, gradient and row-major Hessian (`hess` has length d·d).
    pub fn value_grad_hess(&self, x: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64 {
        let d = grad.len();
        grad.iter_mut().for_each(|g| *g = 0.0);
        hess.iter_mut().for_each(|h| *h = 0.0);
        let mut acc = self.constant;
        for t in &self.terms {
            let (s, c) = Self::phase(&t.wave, x).sin_cos();
            let val = t.cos * c + t.sin * s;
            acc += val;
            let dphase = -t.cos * s + t.sin * c;
            for i in 0..d {
                let mi = TAU * t.wave[i] as f64;
                grad[i] += mi * dphase;
                for j in 0..d {
                    let mj = TAU * t.wave[j] as f64;
                    hess[i * d + j] -= mi * mj * val;
                }
            }
        }
        acc
    }
}
