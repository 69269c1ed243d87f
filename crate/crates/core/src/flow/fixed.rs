//! Minimization of `𝒜ₖ` over fixed-endpoint paths at a frozen period,
//! by damped Newton with a banded Cholesky factorization.

use crate::error::{Error, Result};
use crate::loopspace::{action, d_action, hessian_x_banded, EndpointMode, FreeTimeLoop};
use crate::systems::Lagrangian;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedPeriodOptions {
    /// Stop when the Euler-Lagrange residual (node part of the
    /// differential per unit time weight) falls below this.
    pub el_tol: f64,
    pub max_iter: usize,
}

impl Default for FixedPeriodOptions {
    fn default() -> Self {
        Self {
            el_tol: 1e-9,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FixedPeriodResult {
    pub loop_: FreeTimeLoop,
    pub action: f64,
    pub el_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn node_residual(c: &[f64], lp: &FreeTimeLoop) -> f64 {
    let d = lp.dim();
    let hs = 2.0 / lp.n() as f64;
    c.chunks(d)
        .enumerate()
        .map(|(slot, ch)| {
            let i = slot + 1;
            let omega = if i % 2 == 1 { 4.0 * hs / 6.0 } else { 2.0 * hs / 6.0 };
            ch.iter().fold(0.0f64, |m, x| m.max(x.abs())) / (omega * lp.period())
        })
        .fold(0.0, f64::max)
}

/// Minimizes `x ↦ 𝒜ₖ(x, T)` with `T` and both endpoints held fixed.
pub fn minimize_fixed_period<L: Lagrangian + ?Sized>(
    l: &L,
    k: f64,
    start: &FreeTimeLoop,
    opts: &FixedPeriodOptions,
) -> Result<FixedPeriodResult> {
    if start.mode() != EndpointMode::Fixed {
        return Err(Error::invalid("fixed-period minimization needs fixed endpoints"));
    }
    let mut lp = start.clone();
    let mut a = action(l, &lp, k)?;
    let mut shift = 0.0;
    let mut iter = 0;
    loop {
        let mut c = d_action(l, &lp, k)?.differential.nodes;
        let res = node_residual(&c, &lp);
        if res <= opts.el_tol || iter >= opts.max_iter {
            return Ok(FixedPeriodResult {
                loop_: lp,
                action: a,
                el_residual: res,
                iterations: iter,
                converged: res <= opts.el_tol,
            });
        }
        iter += 1;
        let h = hessian_x_banded(l, &lp)?;
        let diag_scale = h.max_abs_diagonal().max(1e-300);
        let chol = loop {
            let mut hh = h.clone();
            hh.add_diagonal(shift);
            if let Some(ch) = hh.cholesky() {
                break ch;
            }
            shift = if shift == 0.0 { 1e-10 * diag_scale } else { shift * 4.0 };
            if shift > 1e6 * diag_scale {
                return Err(Error::numeric("could not regularize the fixed-period Hessian"));
            }
        };
        let step = chol.solve(&c);
        let slope: f64 = -step.iter().zip(&c).map(|(s, g)| s * g).sum::<f64>();
        let z = lp.to_free();
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut trial = z.clone();
            for (t, s) in trial.iter_mut().zip(&step) {
                *t -= alpha * s;
            }
            if let Ok(cand) = lp.from_free(&trial) {
                if let Ok(at) = action(l, &cand, k) {
                    // near convergence the action is flat to rounding; accept
                    // full steps that do not increase it beyond that
                    let tol = 1e-13 * a.abs().max(1.0);
                    if at <= a + 1e-4 * alpha * slope || (alpha == 1.0 && at <= a + tol) {
                        lp = cand;
                        a = at;
                        accepted = true;
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            c.clear();
            let res = node_residual(&d_action(l, &lp, k)?.differential.nodes, &lp);
            return Ok(FixedPeriodResult {
                loop_: lp,
                action: a,
                el_residual: res,
                iterations: iter,
                converged: res <= opts.el_tol,
            });
        }
        shift = if alpha == 1.0 { shift * 0.25 } else { shift };
        if shift < 1e-14 * diag_scale {
            shift = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::TonelliLagrangian;

    #[test]
    fn free_particle_minimizer_is_the_segment() {
        let l = TonelliLagrangian::free(2).unwrap();
        let mut start = FreeTimeLoop::segment(&[0.0, 0.0], &[1.0, 2.0], 3.0, 32).unwrap();
        let z: Vec<f64> = start
            .to_free()
            .iter()
            .enumerate()
            .map(|(i, x)| if i + 1 < start.free_len() { x + 0.01 * (i as f64).sin() } else { *x })
            .collect();
        start = start.from_free(&z).unwrap();
        let r = minimize_fixed_period(&l, 0.0, &start, &FixedPeriodOptions::default()).unwrap();
        assert!(r.converged);
        // |Δx|²/(2T)
        assert!((r.action - 5.0 / 6.0).abs() < 1e-12);
    }
}
