//! Newton refinement of critical points of `𝒜ₖ`.
//!
//! The Newton system is the full Hessian over (free nodes, T). Exact
//! translation symmetries and the near-symmetry of shifting the parameter
//! origin make it singular or nearly so; the step therefore uses a
//! truncated spectral pseudo-inverse of the diagonally scaled Hessian.

use crate::error::{Error, Result};
use crate::loopspace::{d_action, el_residual, hessian_dense, vertex_energies, FreeTimeLoop};
use crate::systems::Lagrangian;
use nalgebra::{DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineOptions {
    /// Target for the discrete Euler-Lagrange residual.
    pub el_tol: f64,
    /// Target for `|∫E ds − k|`.
    pub energy_tol: f64,
    pub max_iter: usize,
    /// Relative eigenvalue cutoff of the pseudo-inverse.
    pub cutoff: f64,
    /// Residuals below this are accepted when Newton stagnates at the
    /// round-off level before reaching the targets.
    pub el_floor: f64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            el_tol: 1e-10,
            energy_tol: 1e-10,
            max_iter: 40,
            cutoff: 1e-11,
            el_floor: 1e-9,
        }
    }
}

/// Quality measures of a (refined) critical loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub el_residual: f64,
    /// `|∫E ds − k|`
    pub energy_error: f64,
    /// `max_i |E(x_i, v_i) − k|` over nodes.
    pub energy_fluctuation: f64,
    pub iterations: usize,
}

pub fn residuals<L: Lagrangian + ?Sized>(l: &L, k: f64, lp: &FreeTimeLoop) -> Result<Residuals> {
    let parts = d_action(l, lp, k)?;
    let fluct = vertex_energies(l, lp)?
        .iter()
        .fold(0.0f64, |m, e| m.max((e - k).abs()));
    Ok(Residuals {
        el_residual: el_residual(l, lp, k)?,
        energy_error: parts.differential.period.abs(),
        energy_fluctuation: fluct,
        iterations: 0,
    })
}

fn scaled_merit(c: &[f64], scale: &[f64]) -> f64 {
    c.iter().zip(scale).map(|(a, s)| (a * s).powi(2)).sum()
}

/// Newton iteration on `d𝒜ₖ = 0` in the unknowns (nodes, T).
pub fn refine_critical<L: Lagrangian + ?Sized>(
    l: &L,
    k: f64,
    start: &FreeTimeLoop,
    opts: &RefineOptions,
) -> Result<(FreeTimeLoop, Residuals)> {
    let mut lp = start.clone();
    let mut res = residuals(l, k, &lp)?;
    let done = |r: &Residuals| r.el_residual <= opts.el_tol && r.energy_error <= opts.energy_tol;
    let mut iter = 0;
    while !done(&res) {
        if iter >= opts.max_iter {
            if res.el_residual <= opts.el_floor && res.energy_error <= opts.el_floor {
                break;
            }
            return Err(Error::RefineFailed(format!(
                "no convergence after {iter} Newton steps (EL residual {:.3e}, energy error {:.3e})",
                res.el_residual, res.energy_error
            )));
        }
        iter += 1;
        let c = d_action(l, &lp, k)?.differential.to_free();
        let h = hessian_dense(l, &lp)?;
        let m = c.len();
        let scale: Vec<f64> = (0..m)
            .map(|i| {
                let d = h[(i, i)].abs();
                if d > 0.0 && d.is_finite() {
                    1.0 / d.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let hs = h.map_with_location(|i, j, v| v * scale[i] * scale[j]);
        let eig = SymmetricEigen::new(hs);
        let lmax = eig.eigenvalues.amax();
        let rhs = DVector::from_fn(m, |i, _| c[i] * scale[i]);
        let coeffs = eig.eigenvectors.transpose() * &rhs;
        let mut y = DVector::zeros(m);
        for (j, lam) in eig.eigenvalues.iter().enumerate() {
            if lam.abs() > opts.cutoff * lmax {
                y += eig.eigenvectors.column(j) * (coeffs[j] / lam);
            }
        }
        let z = lp.to_free();
        let merit0 = scaled_merit(&c, &scale);
        let mut alpha = 1.0;
        let mut next = None;
        for _ in 0..30 {
            let trial: Vec<f64> = (0..m).map(|i| z[i] - alpha * scale[i] * y[i]).collect();
            if trial[m - 1] > 0.0 {
                if let Ok(cand) = lp.from_free(&trial) {
                    if let Ok(parts) = d_action(l, &cand, k) {
                        let merit = scaled_merit(&parts.differential.to_free(), &scale);
                        if merit < merit0 || (alpha == 1.0 && merit <= merit0 * (1.0 + 1e-12)) {
                            next = Some(cand);
                            break;
                        }
                    }
                }
            }
            alpha *= 0.5;
        }
        match next {
            Some(cand) => lp = cand,
            None => {
                // round-off floor: no further decrease is possible
                if res.el_residual <= opts.el_floor && res.energy_error <= opts.el_floor {
                    break;
                }
                return Err(Error::RefineFailed(format!(
                    "Newton line search failed (EL residual {:.3e}, energy error {:.3e})",
                    res.el_residual, res.energy_error
                )));
            }
        }
        res = residuals(l, k, &lp)?;
    }
    res.iterations = iter;
    Ok((lp, res))
}
