//! Fixed-period minimization between two points: `Φ_c(q₀, q₁; T)`.

use crate::error::{Error, Result};
use crate::flow::{minimize_fixed_period, FixedPeriodOptions};
use crate::loopspace::{action, FreeTimeLoop};
use crate::systems::Lagrangian;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeierlsOptions {
    /// Nodes per unit of period (rounded up to an even count).
    pub nodes_per_time: f64,
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub fixed: FixedPeriodOptions,
}

impl Default for PeierlsOptions {
    fn default() -> Self {
        Self {
            nodes_per_time: 20.0,
            min_nodes: 64,
            max_nodes: 8192,
            fixed: FixedPeriodOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeierlsPoint {
    pub period: f64,
    /// `None` when no start converged.
    pub phi: Option<f64>,
    pub minimizer: Option<FreeTimeLoop>,
    pub el_residual: Option<f64>,
}

/// Open polyline through `vertices`, sampled uniformly in arclength, as a
/// fixed-endpoint loop.
fn polyline(vertices: &[Vec<f64>], period: f64, n: usize) -> Result<FreeTimeLoop> {
    let d = vertices[0].len();
    let seg: Vec<f64> = vertices
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (b - a).powi(2)).sum::<f64>().sqrt())
        .collect();
    let total: f64 = seg.iter().sum();
    let mut nodes = Vec::with_capacity((n + 1) * d);
    let (mut s, mut acc) = (0, 0.0);
    for i in 0..=n {
        let target = total * i as f64 / n as f64;
        while s + 1 < seg.len() && acc + seg[s] < target {
            acc += seg[s];
            s += 1;
        }
        let f = if seg[s] > 0.0 { ((target - acc) / seg[s]).min(1.0) } else { 0.0 };
        for c in 0..d {
            nodes.push(vertices[s][c] + f * (vertices[s + 1][c] - vertices[s][c]));
        }
    }
    // pin the endpoints exactly
    nodes[..d].copy_from_slice(&vertices[0]);
    nodes[n * d..].copy_from_slice(vertices.last().expect("non-empty"));
    FreeTimeLoop::fixed(d, nodes, period)
}

/// Excursion from `q0` up the vertical line through it by `height`, across
/// by `width`, back down and over to `q1`.
pub fn rectangle_path(q0: &[f64], q1: &[f64], height: f64, width: f64, period: f64, n: usize) -> Result<FreeTimeLoop> {
    if q0.len() < 2 {
        return Err(Error::invalid("rectangle paths need two dimensions"));
    }
    let mut up = q0.to_vec();
    up[1] += height;
    let mut over = up.clone();
    over[0] += width;
    let mut down = over.clone();
    down[1] = q0[1];
    polyline(&[q0.to_vec(), up, over, down, q1.to_vec()], period, n)
}

fn node_count(t: f64, opts: &PeierlsOptions) -> usize {
    let n = (opts.nodes_per_time * t).ceil() as usize;
    (n + n % 2).clamp(opts.min_nodes, opts.max_nodes)
}

/// `Φ_c(q₀, q₁; T) = min A_{L+c}` over paths from `q₀` to the lift `q₁`
/// in time `T`, by Newton minimization from a straight segment and, in two
/// or more dimensions, rectangular excursions along vertical lines.
pub fn peierls_phi<L: Lagrangian + ?Sized>(l: &L, c: f64, q0: &[f64], q1: &[f64], t: f64, opts: &PeierlsOptions) -> Result<PeierlsPoint> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!("period must be positive, got {t}")));
    }
    if q0.len() != l.dim() || q1.len() != l.dim() {
        return Err(Error::invalid("endpoints have the wrong dimension"));
    }
    let n = node_count(t, opts);
    let mut starts = vec![FreeTimeLoop::segment(q0, q1, t, n)?];
    if l.dim() >= 2 {
        let h = ((t - 1.0) / 2.0).max(0.5);
        for height in [h, 0.5 * h, -h, -0.5 * h] {
            for width in [0.5, -0.5] {
                starts.push(rectangle_path(q0, q1, height, width, t, n)?);
            }
        }
    }
    let mut best: Option<(FreeTimeLoop, f64, f64)> = None;
    for s in starts {
        let Ok(r) = minimize_fixed_period(l, c, &s, &opts.fixed) else { continue };
        if !r.converged {
            continue;
        }
        let a = action(l, &r.loop_, c)?;
        if best.as_ref().is_none_or(|b| a < b.1) {
            best = Some((r.loop_, a, r.el_residual));
        }
    }
    Ok(match best {
        Some((lp, a, res)) => PeierlsPoint {
            period: t,
            phi: Some(a),
            minimizer: Some(lp),
            el_residual: Some(res),
        },
        None => PeierlsPoint {
            period: t,
            phi: None,
            minimizer: None,
            el_residual: None,
        },
    })
}

/// [`peierls_phi`] over a grid of periods (independent, in parallel).
pub fn peierls_scan<L: Lagrangian + ?Sized>(
    l: &L,
    c: f64,
    q0: &[f64],
    q1: &[f64],
    t_grid: &[f64],
    opts: &PeierlsOptions,
) -> Result<Vec<PeierlsPoint>> {
    t_grid.par_iter().map(|&t| peierls_phi(l, c, q0, q1, t, opts)).collect()
}
