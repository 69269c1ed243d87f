//! Second variation of `𝒜ₖ` at a critical loop, in the loop-space metric.

use crate::error::{Error, Result};
use crate::loopspace::{hessian_dense, node_velocities, EndpointMode, FreeTimeLoop, MetricOperator, MetricWeights};
use crate::systems::Lagrangian;
use nalgebra::{DMatrix, SymmetricEigen};

#[derive(Debug, Clone, PartialEq)]
pub struct HessianSpectrum {
    /// Smallest eigenvalues of `G⁻¹ H`, ascending.
    pub eigenvalues: Vec<f64>,
    /// Overlap of each eigenvector with the unit reparametrization tangent.
    pub overlaps: Vec<f64>,
    /// Index of the reparametrization mode, if identified.
    pub reparam: Option<usize>,
    /// `max |H − Hᵀ| / max |H|`.
    pub asymmetry: f64,
    /// Set when the asymmetry exceeds 1e-4.
    pub asymmetry_warning: bool,
}

impl HessianSpectrum {
    /// Lowest eigenvalue outside the reparametrization mode.
    pub fn bottom(&self) -> f64 {
        self.eigenvalues
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != self.reparam)
            .map(|(_, v)| *v)
            .fold(f64::INFINITY, f64::min)
    }
}

/// The `m` smallest eigenvalues of the second variation of `𝒜ₖ` at `lp`
/// relative to the loop-space metric (`H ξ = λ G ξ` over admissible
/// variations). The eigenvector overlapping most with the shift of the
/// parameter origin is flagged as the reparametrization mode when it sits
/// among the near-zero eigenvalues. `k` enters only through the
/// first-order terms, so the spectrum does not depend on it.
pub fn hessian_spectrum<L: Lagrangian + ?Sized>(l: &L, _k: f64, lp: &FreeTimeLoop, m: usize, weights: MetricWeights) -> Result<HessianSpectrum> {
    let h = hessian_dense(l, lp)?;
    let n = h.nrows();
    let hmax = h.amax().max(f64::MIN_POSITIVE);
    let asymmetry = (&h - h.transpose()).amax() / hmax;
    let h = (&h + h.transpose()) * 0.5;
    let op = MetricOperator::new(l.manifold(), lp, weights);
    let mut g = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = op.apply(&e);
        e[j] = 0.0;
        for i in 0..n {
            g[(i, j)] = col[i];
        }
    }
    let chol = g
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numeric("loop-space metric is not positive definite"))?;
    let lower = chol.l();
    // C⁻¹ H C⁻ᵀ
    let tmp = lower
        .solve_lower_triangular(&h)
        .ok_or_else(|| Error::numeric("metric factor is singular"))?;
    let reduced = lower
        .solve_lower_triangular(&tmp.transpose())
        .ok_or_else(|| Error::numeric("metric factor is singular"))?;
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let eig = SymmetricEigen::new(reduced);

    // shift of the parameter origin, in free coordinates
    let vel = node_velocities(lp);
    let d = lp.dim();
    let mut shift = vec![0.0; n];
    let first = match lp.mode() {
        EndpointMode::Closed => 0,
        EndpointMode::Fixed => 1,
    };
    for s in 0..lp.free_nodes() {
        for c in 0..d {
            shift[s * d + c] = vel[(s + first) * d + c];
        }
    }
    let gs = op.apply(&shift);
    let snorm = shift.iter().zip(&gs).map(|(a, b)| a * b).sum::<f64>().sqrt();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
    order.truncate(m.min(n));
    let lt = lower.transpose();
    let mut eigenvalues = Vec::with_capacity(order.len());
    let mut overlaps = Vec::with_capacity(order.len());
    for &j in &order {
        eigenvalues.push(eig.eigenvalues[j]);
        // ξ = C⁻ᵀ y has unit metric norm; ⟨ξ, s⟩_G = y · Cᵀ s
        let y = eig.eigenvectors.column(j);
        let ov = if snorm > 0.0 {
            let cs = &lt * nalgebra::DVector::from_column_slice(&shift);
            (y.dot(&cs) / snorm).abs()
        } else {
            0.0
        };
        overlaps.push(ov);
    }
    let scale = eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let reparam = overlaps
        .iter()
        .enumerate()
        .filter(|(i, ov)| **ov > 0.5 && eigenvalues[*i].abs() <= 1e-3 * scale.max(1.0))
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i);
    Ok(HessianSpectrum {
        eigenvalues,
        overlaps,
        reparam,
        asymmetry,
        asymmetry_warning: asymmetry > 1e-4,
    })
}
