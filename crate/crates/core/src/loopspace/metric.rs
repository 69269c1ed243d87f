//! The weighted `H¹` metric on free-period loops and the gradient it induces.
//!
//! Discretely, with plain node differences,
//! `<(ξ,α),(η,β)> = αβ + f(T) e^{2u(x₀)} ξ₀·η₀ + g(T) N Σᵢ e^{2u(x_{i+½})} Δξᵢ·Δηᵢ`. The
//! node operator acts identically on every coordinate, so one scalar
//! tridiagonal system (cyclic for closed loops, Dirichlet for fixed ends)
//! is solved per coordinate.

use super::{action::d_action, EndpointMode, FreeTimeLoop, LoopCotangent, LoopTangent, MetricWeights};
use crate::error::{Error, Result};
use crate::linalg::{solve_cyclic_tridiagonal, solve_tridiagonal};
use crate::systems::{Lagrangian, TorusManifold};

/// Scalar tridiagonal representation of the metric at one loop.
#[derive(Debug, Clone)]
pub struct MetricOperator {
    mode: EndpointMode,
    dim: usize,
    /// sub-, main and super-diagonal over free nodes
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl MetricOperator {
    pub fn new(manifold: &TorusManifold, lp: &FreeTimeLoop, weights: MetricWeights) -> Self {
        let n = lp.n();
        let d = lp.dim();
        let t = lp.period();
        let g = weights.g_solver(t) * n as f64;
        let mut mid = vec![0.0; d];
        // edge weights e^{2u} at segment midpoints
        let edge: Vec<f64> = (0..n)
            .map(|i| {
                for c in 0..d {
                    mid[c] = 0.5 * (lp.node(i)[c] + lp.node(i + 1)[c]);
                }
                g * manifold.metric_factor(&mid)
            })
            .collect();
        let m = lp.free_nodes();
        let (mut lower, mut diag, mut upper) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
        match lp.mode() {
            EndpointMode::Closed => {
                for i in 0..m {
                    let prev = edge[(i + n - 1) % n];
                    diag[i] = prev + edge[i];
                    lower[i] = -prev;
                    upper[i] = -edge[i];
                }
                diag[0] += weights.f(t) * manifold.metric_factor(lp.node(0));
            }
            EndpointMode::Fixed => {
                // free slot s is node s+1, touching edges s and s+1
                for s in 0..m {
                    diag[s] = edge[s] + edge[s + 1];
                    lower[s] = if s > 0 { -edge[s] } else { 0.0 };
                    upper[s] = if s + 1 < m { -edge[s + 1] } else { 0.0 };
                }
            }
        }
        Self {
            mode: lp.mode(),
            dim: d,
            lower,
            diag,
            upper,
        }
    }

    /// `G z` over free coordinates (period last).
    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        let m = self.diag.len();
        let d = self.dim;
        let mut out = vec![0.0; z.len()];
        for i in 0..m {
            let prev = match self.mode {
                EndpointMode::Closed => Some((i + m - 1) % m),
                EndpointMode::Fixed => i.checked_sub(1),
            };
            let next = match self.mode {
                EndpointMode::Closed => Some((i + 1) % m),
                EndpointMode::Fixed => (i + 1 < m).then_some(i + 1),
            };
            for c in 0..d {
                let mut s = self.diag[i] * z[i * d + c];
                if let Some(p) = prev {
                    s += self.lower[i] * z[p * d + c];
                }
                if let Some(nx) = next {
                    s += self.upper[i] * z[nx * d + c];
                }
                out[i * d + c] = s;
            }
        }
        out[m * d] = z[m * d];
        out
    }

    /// `G⁻¹ r` over free coordinates.
    pub fn solve(&self, r: &[f64]) -> Result<Vec<f64>> {
        let m = self.diag.len();
        let d = self.dim;
        let mut out = vec![0.0; r.len()];
        let mut rhs = vec![0.0; m];
        for c in 0..d {
            for i in 0..m {
                rhs[i] = r[i * d + c];
            }
            let sol = match self.mode {
                EndpointMode::Closed => solve_cyclic_tridiagonal(&self.lower, &self.diag, &self.upper, &rhs)?,
                EndpointMode::Fixed => solve_tridiagonal(&self.lower, &self.diag, &self.upper, &rhs)?,
            };
            for i in 0..m {
                out[i * d + c] = sol[i];
            }
        }
        out[m * d] = r[m * d];
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::numeric("metric solve produced non-finite values"));
        }
        Ok(out)
    }
}

/// Inner product of two admissible tangents at `lp`.
pub fn inner(manifold: &TorusManifold, lp: &FreeTimeLoop, weights: MetricWeights, a: &LoopTangent, b: &LoopTangent) -> f64 {
    let op = MetricOperator::new(manifold, lp, weights);
    let za = a.to_free(lp);
    let zb = b.to_free(lp);
    op.apply(&za).iter().zip(&zb).map(|(x, y)| x * y).sum()
}

pub fn norm(manifold: &TorusManifold, lp: &FreeTimeLoop, weights: MetricWeights, a: &LoopTangent) -> f64 {
    inner(manifold, lp, weights, a, a).max(0.0).sqrt()
}

/// Metric dual of a cotangent.
pub fn dual_tangent(manifold: &TorusManifold, lp: &FreeTimeLoop, weights: MetricWeights, c: &LoopCotangent) -> Result<LoopTangent> {
    let op = MetricOperator::new(manifold, lp, weights);
    let z = op.solve(&c.to_free())?;
    Ok(LoopTangent::from_free(lp, &z))
}

/// Dual norm `sqrt(c · G⁻¹ c)`, equal to the metric norm of the gradient.
pub fn dual_norm(manifold: &TorusManifold, lp: &FreeTimeLoop, weights: MetricWeights, c: &LoopCotangent) -> Result<f64> {
    let op = MetricOperator::new(manifold, lp, weights);
    let cz = c.to_free();
    let z = op.solve(&cz)?;
    Ok(z.iter().zip(&cz).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt())
}

/// Gradient of `𝒜ₖ`: the tangent `Y` with `<Y, ξ> = d𝒜ₖ(ξ)` for every
/// admissible `ξ`.
pub fn h1_gradient<L: Lagrangian + ?Sized>(l: &L, lp: &FreeTimeLoop, k: f64, weights: MetricWeights) -> Result<LoopTangent> {
    let parts = d_action(l, lp, k)?;
    dual_tangent(l.manifold(), lp, weights, &parts.differential)
}

/// Metric length of the straight displacement from `a` to `b` measured at
/// `a`; both loops must share shape and endpoint mode.
pub fn distance(manifold: &TorusManifold, weights: MetricWeights, a: &FreeTimeLoop, b: &FreeTimeLoop) -> Result<f64> {
    if a.n() != b.n() || a.mode() != b.mode() || a.dim() != b.dim() {
        return Err(Error::invalid("loops have different shapes"));
    }
    let tan = LoopTangent {
        nodes: b.nodes().iter().zip(a.nodes()).map(|(x, y)| x - y).collect(),
        period: b.period() - a.period(),
    };
    Ok(norm(manifold, a, weights, &tan))
}
