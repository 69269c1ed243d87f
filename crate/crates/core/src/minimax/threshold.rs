//! The explicit mountain-pass threshold `c = ℓ₀[√(2a(k−d₁)) − bℓ₀]`.

use crate::error::{Error, Result};
use crate::systems::{convexity_constants, Lagrangian, TonelliLagrangian};
use std::f64::consts::TAU;

/// Floor for `b` when the one-form is closed (`dθ ≡ 0`).
pub const B_MIN: f64 = 1e-12;

/// `ℓ₀ [√(2a·gap) − b ℓ₀]`.
pub fn threshold_formula(a: f64, b: f64, gap: f64, l0: f64) -> f64 {
    l0 * ((2.0 * a * gap).sqrt() - b * l0)
}

/// Constants entering the threshold, reported alongside it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdParts {
    pub a: f64,
    pub b: f64,
    /// `k − d₁` (or `k − e₀` without a base point)
    pub gap: f64,
    /// `½ diam U` (or the covering radius `r₀`)
    pub radius: f64,
    pub l0: f64,
    pub c: f64,
}

/// Upper bound for `|dθ(u,w)| / (|u|_x |w|_x)` from the Fourier
/// coefficients of `θ` and the range of the conformal factor.
pub fn curl_bound(l: &TonelliLagrangian) -> f64 {
    let d = l.manifold().dim();
    let theta = l.one_form();
    // |∂_i θ_j − ∂_j θ_i| bounded termwise; Frobenius bound for the
    // operator norm of the antisymmetric matrix
    let mut fro = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i == j {
                continue;
            }
            let mut s = 0.0;
            for t in &theta[j].terms {
                s += TAU * (t.wave[i] as f64).abs() * t.cos.hypot(t.sin);
            }
            for t in &theta[i].terms {
                s += TAU * (t.wave[j] as f64).abs() * t.cos.hypot(t.sin);
            }
            fro += s * s;
        }
    }
    // the Frobenius norm counts each pair twice; for d = 2 the operator
    // norm of [[0, β], [−β, 0]] is exactly |β|
    let op = (fro / 2.0).sqrt();
    op * (2.0 * l.manifold().conformal_field().amplitude_bound()).exp()
}

fn energy_at_rest(l: &TonelliLagrangian, x: &[f64]) -> f64 {
    -l.psi(x)
}

/// The threshold of the mountain-pass geometry at energy `k`, for loops
/// based at `base`, or for free closed loops when `base` is `None`
/// (`e0` is then required and must be below `k`).
pub fn lower_bound_c(l: &TonelliLagrangian, k: f64, base: Option<&[f64]>, e0: f64) -> Result<ThresholdParts> {
    let a = convexity_constants(l, 2000)?.a0;
    let b = curl_bound(l).max(B_MIN);
    let u_amp = l.manifold().conformal_field().amplitude_bound();
    // chart balls of Euclidean radius ¼ fit in the fundamental domain;
    // metric radii shrink by at most e^{−max|u|}
    let chart = 0.25 * (-u_amp).exp();
    let (gap, radius) = match base {
        Some(q0) => {
            let e = energy_at_rest(l, q0);
            if k <= e {
                return Err(Error::Precondition(format!("k = {k} must exceed E(q0, 0) = {e}")));
            }
            let d1 = 0.5 * (e + k);
            // −ψ ≤ d₁ on the ball: Lipschitz bound of ψ from its coefficients
            let lip: f64 = l
                .potential()
                .terms
                .iter()
                .map(|t| TAU * t.wave.iter().map(|w| (*w as f64).powi(2)).sum::<f64>().sqrt() * t.cos.hypot(t.sin))
                .sum();
            let rho = if lip > 0.0 { ((d1 - e) / lip).min(chart) } else { chart };
            (k - d1, rho)
        }
        None => {
            if k <= e0 {
                return Err(Error::Precondition(format!("k = {k} must exceed e0 = {e0}")));
            }
            (k - e0, chart)
        }
    };
    let l0 = 0.5 * radius.min((a * gap / (2.0 * b * b)).sqrt());
    Ok(ThresholdParts {
        a,
        b,
        gap,
        radius,
        l0,
        c: threshold_formula(a, b, gap, l0),
    })
}
