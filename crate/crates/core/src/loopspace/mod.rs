//! Discrete model of `H¹(M) × R⁺`: loops with a free period, the
//! free-period action, its differential and Hessian, and the weighted
//! metric used to turn differentials into gradients.

mod action;
mod io;
mod metric;
mod weights;

pub use action::{
    action, d_action, el_residual, hessian_dense, hessian_x_banded, mean_energy, node_velocities,
    quadrature_energies, vertex_energies, ActionParts,
};
pub use io::{format_loop, read_loop, write_loop};
pub use metric::{distance, dual_norm, dual_tangent, h1_gradient, inner, norm, MetricOperator};
pub use weights::{weights, MetricWeights, LN_G_FLOOR};

use crate::error::{Error, Result};
use crate::systems::TorusManifold;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Boundary condition of a loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EndpointMode {
    /// `x(1) = x(0) + winding`, base point free.
    Closed,
    /// Both endpoints pinned at the stored lifts.
    Fixed,
}

/// A discretized curve `x: [0,1] → M` on the uniform grid `s_i = i/N`
/// (node coordinates live in the universal cover) together with its
/// period `T > 0`.
///
/// `N` is even: consecutive node triples form quadratic elements.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeTimeLoop {
    dim: usize,
    nodes: Vec<f64>,
    winding: Vec<i64>,
    mode: EndpointMode,
    period: f64,
}

pub const MIN_NODES: usize = 8;

impl FreeTimeLoop {
    /// Closed loop from its first `N` nodes; node `N` is set to node 0 plus
    /// the winding vector.
    pub fn closed(dim: usize, first_nodes: Vec<f64>, winding: Vec<i64>, period: f64) -> Result<Self> {
        if dim == 0 || !first_nodes.len().is_multiple_of(dim) {
            return Err(Error::invalid("node buffer length is not a multiple of the dimension"));
        }
        if winding.len() != dim {
            return Err(Error::invalid("winding vector has wrong length"));
        }
        let n = first_nodes.len() / dim;
        let mut nodes = first_nodes;
        for c in 0..dim {
            nodes.push(nodes[c] + winding[c] as f64);
        }
        let l = Self {
            dim,
            nodes,
            winding,
            mode: EndpointMode::Closed,
            period,
        };
        l.validate(n)?;
        Ok(l)
    }

    /// Loop with pinned endpoints given all `N+1` lifted nodes.
    pub fn fixed(dim: usize, nodes: Vec<f64>, period: f64) -> Result<Self> {
        if dim == 0 || !nodes.len().is_multiple_of(dim) || nodes.len() / dim < 2 {
            return Err(Error::invalid("node buffer length is not a multiple of the dimension"));
        }
        let n = nodes.len() / dim - 1;
        let winding = (0..dim)
            .map(|c| (nodes[n * dim + c].floor() - nodes[c].floor()) as i64)
            .collect();
        let l = Self {
            dim,
            nodes,
            winding,
            mode: EndpointMode::Fixed,
            period,
        };
        l.validate(n)?;
        Ok(l)
    }

    fn validate(&self, n: usize) -> Result<()> {
        if n < MIN_NODES || !n.is_multiple_of(2) {
            return Err(Error::invalid(format!("node count must be even and >= {MIN_NODES}, got {n}")));
        }
        if !(self.period > 0.0) || !self.period.is_finite() {
            return Err(Error::invalid(format!("period must be positive and finite, got {}", self.period)));
        }
        if !self.nodes.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("non-finite node coordinates"));
        }
        Ok(())
    }

    /// Constant loop at `q`.
    pub fn constant(q: &[f64], period: f64, n: usize) -> Result<Self> {
        let d = q.len();
        let nodes = (0..n).flat_map(|_| q.iter().copied()).collect();
        Self::closed(d, nodes, vec![0; d], period)
    }

    /// Straight closed loop `x(s) = start + s·winding`.
    pub fn straight(start: &[f64], winding: &[i64], period: f64, n: usize) -> Result<Self> {
        let d = start.len();
        let mut nodes = Vec::with_capacity(n * d);
        for i in 0..n {
            let s = i as f64 / n as f64;
            for c in 0..d {
                nodes.push(start[c] + s * winding[c] as f64);
            }
        }
        Self::closed(d, nodes, winding.to_vec(), period)
    }

    /// Circle of the given radius in the `(x₁, x₂)` plane, traversed
    /// counter-clockwise when `orientation > 0`.
    pub fn circle(center: &[f64], radius: f64, orientation: f64, period: f64, n: usize) -> Result<Self> {
        let d = center.len();
        if d < 2 {
            return Err(Error::invalid("circle needs dimension >= 2"));
        }
        let sign = if orientation >= 0.0 { 1.0 } else { -1.0 };
        let mut nodes = Vec::with_capacity(n * d);
        for i in 0..n {
            let phi = TAU * i as f64 / n as f64;
            for c in 0..d {
                nodes.push(match c {
                    0 => center[0] + radius * phi.cos(),
                    1 => center[1] + sign * radius * phi.sin(),
                    _ => center[c],
                });
            }
        }
        Self::closed(d, nodes, vec![0; d], period)
    }

    /// Straight segment from `q0` to `q1` (both already lifted) with fixed ends.
    pub fn segment(q0: &[f64], q1: &[f64], period: f64, n: usize) -> Result<Self> {
        let d = q0.len();
        let mut nodes = Vec::with_capacity((n + 1) * d);
        for i in 0..=n {
            let s = i as f64 / n as f64;
            for c in 0..d {
                nodes.push(q0[c] + s * (q1[c] - q0[c]));
            }
        }
        Self::fixed(d, nodes, period)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of intervals `N` (there are `N + 1` stored nodes).
    pub fn n(&self) -> usize {
        self.nodes.len() / self.dim - 1
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn mode(&self) -> EndpointMode {
        self.mode
    }

    pub fn winding(&self) -> &[i64] {
        &self.winding
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn with_period(&self, period: f64) -> Result<Self> {
        let mut l = self.clone();
        l.period = period;
        l.validate(l.n())?;
        Ok(l)
    }

    /// Number of free node indices: `N` when closed, `N - 1` when fixed.
    pub fn free_nodes(&self) -> usize {
        match self.mode {
            EndpointMode::Closed => self.n(),
            EndpointMode::Fixed => self.n() - 1,
        }
    }

    /// Dimension of the free coordinate vector (free nodes plus the period).
    pub fn free_len(&self) -> usize {
        self.free_nodes() * self.dim + 1
    }

    /// Index of the first free node.
    pub(crate) fn first_free(&self) -> usize {
        match self.mode {
            EndpointMode::Closed => 0,
            EndpointMode::Fixed => 1,
        }
    }

    /// Maps stored node `i` to its free-node slot, folding node `N` onto 0.
    pub(crate) fn free_slot(&self, i: usize) -> Option<usize> {
        let n = self.n();
        match self.mode {
            EndpointMode::Closed => Some(if i == n { 0 } else { i }),
            EndpointMode::Fixed => {
                if i == 0 || i == n {
                    None
                } else {
                    Some(i - 1)
                }
            }
        }
    }

    /// Free coordinates `[free nodes..., T]`.
    pub fn to_free(&self) -> Vec<f64> {
        let start = self.first_free() * self.dim;
        let end = start + self.free_nodes() * self.dim;
        let mut z = self.nodes[start..end].to_vec();
        z.push(self.period);
        z
    }

    /// Rebuilds a loop of the same shape from free coordinates.
    pub fn from_free(&self, z: &[f64]) -> Result<Self> {
        if z.len() != self.free_len() {
            return Err(Error::invalid("free vector has wrong length"));
        }
        let mut l = self.clone();
        let d = self.dim;
        let start = self.first_free() * d;
        let k = self.free_nodes() * d;
        l.nodes[start..start + k].copy_from_slice(&z[..k]);
        l.period = z[k];
        if self.mode == EndpointMode::Closed {
            let n = self.n();
            for c in 0..d {
                l.nodes[n * d + c] = l.nodes[c] + self.winding[c] as f64;
            }
        }
        l.validate(l.n())?;
        Ok(l)
    }

    /// `self + step·tangent` (tangent in the same node layout).
    pub fn displaced(&self, tangent: &LoopTangent, step: f64) -> Result<Self> {
        let mut l = self.clone();
        for (x, t) in l.nodes.iter_mut().zip(&tangent.nodes) {
            *x += step * t;
        }
        l.period += step * tangent.period;
        if self.mode == EndpointMode::Closed {
            let n = self.n();
            for c in 0..self.dim {
                l.nodes[n * self.dim + c] = l.nodes[c] + self.winding[c] as f64;
            }
        }
        l.validate(l.n())?;
        Ok(l)
    }

    /// Position on the piecewise-linear interpolant at parameter `s ∈ [0,1]`.
    pub fn position(&self, s: f64) -> Vec<f64> {
        let n = self.n();
        let d = self.dim;
        let t = s.clamp(0.0, 1.0) * n as f64;
        let i = (t.floor() as usize).min(n - 1);
        let frac = t - i as f64;
        (0..d)
            .map(|c| (1.0 - frac) * self.nodes[i * d + c] + frac * self.nodes[(i + 1) * d + c])
            .collect()
    }
}

/// Resamples by linear interpolation onto `n_new` intervals. Winding and
/// endpoints are preserved exactly.
pub fn resample(l: &FreeTimeLoop, n_new: usize) -> Result<FreeTimeLoop> {
    if n_new < MIN_NODES || !n_new.is_multiple_of(2) {
        return Err(Error::invalid(format!("node count must be even and >= {MIN_NODES}, got {n_new}")));
    }
    let d = l.dim();
    let mut nodes = Vec::with_capacity((n_new + 1) * d);
    for i in 0..=n_new {
        if i == 0 {
            nodes.extend_from_slice(l.node(0));
        } else if i == n_new {
            nodes.extend_from_slice(l.node(l.n()));
        } else {
            nodes.extend(l.position(i as f64 / n_new as f64));
        }
    }
    match l.mode() {
        EndpointMode::Closed => {
            nodes.truncate(n_new * d);
            FreeTimeLoop::closed(d, nodes, l.winding().to_vec(), l.period())
        }
        EndpointMode::Fixed => FreeTimeLoop::fixed(d, nodes, l.period()),
    }
}

/// Riemannian length `Σ |Δx_i|` with the metric at segment midpoints.
pub fn loop_length(manifold: &TorusManifold, l: &FreeTimeLoop) -> f64 {
    let d = l.dim();
    let mut mid = vec![0.0; d];
    let mut delta = vec![0.0; d];
    (0..l.n())
        .map(|i| {
            for c in 0..d {
                mid[c] = 0.5 * (l.node(i)[c] + l.node(i + 1)[c]);
                delta[c] = l.node(i + 1)[c] - l.node(i)[c];
            }
            manifold.norm(&mid, &delta)
        })
        .sum()
}

/// Homotopy class read from the lift.
pub fn winding_class(l: &FreeTimeLoop) -> Vec<i64> {
    l.winding().to_vec()
}

/// Tangent vector `(ξ, α)` in the full node layout.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopTangent {
    pub nodes: Vec<f64>,
    pub period: f64,
}

impl LoopTangent {
    pub fn zeros(l: &FreeTimeLoop) -> Self {
        Self {
            nodes: vec![0.0; l.nodes().len()],
            period: 0.0,
        }
    }

    /// Expands free coordinates into an admissible tangent.
    pub fn from_free(l: &FreeTimeLoop, z: &[f64]) -> Self {
        let d = l.dim();
        let n = l.n();
        let mut t = Self::zeros(l);
        for i in 0..=n {
            if let Some(slot) = l.free_slot(i) {
                t.nodes[i * d..(i + 1) * d].copy_from_slice(&z[slot * d..(slot + 1) * d]);
            }
        }
        t.period = z[l.free_nodes() * d];
        t
    }

    pub fn to_free(&self, l: &FreeTimeLoop) -> Vec<f64> {
        let d = l.dim();
        let start = l.first_free() * d;
        let mut z = self.nodes[start..start + l.free_nodes() * d].to_vec();
        z.push(self.period);
        z
    }

    /// Checks the boundary conditions of the tangent space.
    pub fn is_admissible(&self, l: &FreeTimeLoop) -> bool {
        let d = l.dim();
        let n = l.n();
        match l.mode() {
            EndpointMode::Closed => (0..d).all(|c| self.nodes[c] == self.nodes[n * d + c]),
            EndpointMode::Fixed => (0..d).all(|c| self.nodes[c] == 0.0 && self.nodes[n * d + c] == 0.0),
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            nodes: self.nodes.iter().map(|x| a * x).collect(),
            period: a * self.period,
        }
    }
}

/// Differential `d𝒜` stored as pairing coefficients over free nodes
/// (`nodes` has `free_nodes·d` entries) plus the period component.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopCotangent {
    pub nodes: Vec<f64>,
    pub period: f64,
}

impl LoopCotangent {
    pub fn pair(&self, l: &FreeTimeLoop, t: &LoopTangent) -> f64 {
        let z = t.to_free(l);
        self.nodes.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() + self.period * t.period
    }

    pub fn to_free(&self) -> Vec<f64> {
        let mut z = self.nodes.clone();
        z.push(self.period);
        z
    }

    pub fn max_abs(&self) -> f64 {
        self.nodes.iter().fold(self.period.abs(), |m, c| m.max(c.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_invariant_and_winding() {
        let l = FreeTimeLoop::straight(&[0.2, 0.3], &[1, 0], 2.0, 16).unwrap();
        assert_eq!(l.node(16), &[1.2, 0.3]);
        assert_eq!(winding_class(&l), vec![1, 0]);
        assert!((loop_length(&TorusManifold::flat(2), &l) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn constant_loop_has_zero_length() {
        let l = FreeTimeLoop::constant(&[0.1, 0.9], 1.0, 8).unwrap();
        assert_eq!(loop_length(&TorusManifold::flat(2), &l), 0.0);
        assert_eq!(winding_class(&l), vec![0, 0]);
    }

    #[test]
    fn rejects_bad_period_and_odd_counts() {
        assert!(FreeTimeLoop::constant(&[0.0, 0.0], 0.0, 8).is_err());
        assert!(FreeTimeLoop::constant(&[0.0, 0.0], -1.0, 8).is_err());
        assert!(FreeTimeLoop::constant(&[0.0, 0.0], 1.0, 9).is_err());
        assert!(FreeTimeLoop::constant(&[0.0, 0.0], 1.0, 6).is_err());
    }

    #[test]
    fn resample_preserves_winding_and_endpoints() {
        let l = FreeTimeLoop::circle(&[0.5, 0.5], 0.2, 1.0, 1.0, 16).unwrap();
        let r = resample(&l, 40).unwrap();
        assert_eq!(r.winding(), l.winding());
        assert_eq!(r.node(0), l.node(0));
        assert_eq!(r.node(40), l.node(16));
        let s = FreeTimeLoop::segment(&[0.0, 0.0], &[2.5, -1.0], 3.0, 10).unwrap();
        let r = resample(&s, 12).unwrap();
        assert_eq!(r.node(12), &[2.5, -1.0]);
        assert_eq!(r.mode(), EndpointMode::Fixed);
    }

    #[test]
    fn free_round_trip() {
        let l = FreeTimeLoop::circle(&[0.1, 0.2], 0.1, -1.0, 0.7, 12).unwrap();
        let z = l.to_free();
        assert_eq!(z.len(), l.free_len());
        assert_eq!(l.from_free(&z).unwrap(), l);
        let s = FreeTimeLoop::segment(&[0.0, 0.0], &[1.0, 1.0], 1.0, 8).unwrap();
        let t = LoopTangent::from_free(&s, &vec![1.0; s.free_len()]);
        assert!(t.is_admissible(&s));
    }
}
