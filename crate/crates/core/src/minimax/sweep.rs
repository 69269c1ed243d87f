//! Mountain-pass levels over a grid of energies, with the period bound
//! coming from the slope of `k ↦ c(k)`.

use super::negative::{find_negative_action_loop, NegativeSearch};
use super::path::{init_path, relax_minimax, MinimaxOptions, MinimaxResult, PathOfLoops};
use crate::error::{Error, Result};
use crate::loopspace::{action, FreeTimeLoop};
use crate::systems::Lagrangian;
use serde::{Deserialize, Serialize};

/// Clamp range for the estimated slope of `c(k)`.
pub const SLOPE_RANGE: (f64, f64) = (0.1, 1e3);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepOptions {
    pub images: usize,
    /// Longer negative loops are resampled to this many nodes for the path.
    pub path_nodes: usize,
    /// Period of the constant-loop endpoint.
    pub const_period: f64,
    pub minimax: MinimaxOptions,
    #[serde(skip)]
    pub search: NegativeSearch,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            images: 33,
            path_nodes: 128,
            const_period: 1e-2,
            minimax: MinimaxOptions::default(),
            search: NegativeSearch::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub k: f64,
    /// Mountain-pass level, when the relaxation produced one.
    pub level: Option<f64>,
    pub period: Option<f64>,
    pub slope: Option<f64>,
    /// `M(k) + 2`
    pub period_bound: Option<f64>,
    pub el_residual: Option<f64>,
    pub energy_error: Option<f64>,
    pub accepted: bool,
    pub note: String,
}

fn centroid(lp: &FreeTimeLoop) -> Vec<f64> {
    let d = lp.dim();
    (0..d)
        .map(|c| (0..lp.n()).map(|i| lp.node(i)[c]).sum::<f64>() / lp.n() as f64)
        .collect()
}

/// Resamples a long negative loop to `nodes` when it stays negative.
pub(crate) fn coarsened<L: Lagrangian + ?Sized>(l: &L, k: f64, neg: FreeTimeLoop, nodes: usize) -> Result<FreeTimeLoop> {
    if neg.n() <= nodes {
        return Ok(neg);
    }
    let coarse = crate::loopspace::resample(&neg, nodes)?;
    Ok(if action(l, &coarse, k)? < 0.0 { coarse } else { neg })
}

/// Constant endpoint matching the mode and base of `neg`.
pub(crate) fn constant_endpoint(neg: &FreeTimeLoop, period: f64) -> Result<FreeTimeLoop> {
    match neg.mode() {
        crate::loopspace::EndpointMode::Closed => FreeTimeLoop::constant(&centroid(neg), period, neg.n()),
        crate::loopspace::EndpointMode::Fixed => {
            let q = neg.node(0).to_vec();
            let nodes: Vec<f64> = (0..=neg.n()).flat_map(|_| q.iter().copied()).collect();
            FreeTimeLoop::fixed(neg.dim(), nodes, period)
        }
    }
}

/// Path from a short constant loop to a negative-action loop found by
/// [`find_negative_action_loop`].
fn cold_path<L: Lagrangian + Sync + ?Sized>(l: &L, k: f64, opts: &SweepOptions) -> Result<PathOfLoops> {
    match find_negative_action_loop(l, k, None, &opts.search)? {
        Some(neg) => {
            let neg = coarsened(l, k, neg, opts.path_nodes)?;
            let c = constant_endpoint(&neg, opts.const_period)?;
            init_path(&c, &neg, opts.images)
        }
        None => Err(Error::GeometryLost("no loop of negative action found".into())),
    }
}

/// The mountain-pass pipeline at a single energy.
pub fn mountain_pass<L: Lagrangian + Sync + ?Sized>(l: &L, k: f64, opts: &SweepOptions) -> Result<MinimaxResult> {
    relax_minimax(l, k, &cold_path(l, k, opts)?, &opts.minimax)
}

/// Runs the mountain-pass pipeline on `grid_size` equally spaced energies
/// in `k_range` (inclusive), warm-starting every relaxation from the path
/// relaxed at the previous energy while its terminus stays negative.
/// Orbits are accepted when verified and `T ≤ M(k) + 2`, with `M(k)` the
/// finite-difference slope of the levels at the neighbouring grid points.
pub fn struwe_sweep<L: Lagrangian + Sync + ?Sized>(
    l: &L,
    k_range: (f64, f64),
    grid_size: usize,
    opts: &SweepOptions,
) -> Result<Vec<SweepRecord>> {
    if grid_size < 2 {
        return Err(Error::invalid("sweep grid needs at least two points"));
    }
    if !(k_range.0 <= k_range.1) {
        return Err(Error::invalid("sweep range must be increasing"));
    }
    let ks: Vec<f64> = (0..grid_size)
        .map(|i| k_range.0 + (k_range.1 - k_range.0) * i as f64 / (grid_size - 1) as f64)
        .collect();
    let mut records = Vec::with_capacity(grid_size);
    let mut prev: Option<PathOfLoops> = None;
    for &k in &ks {
        if let Some(last) = records.last().filter(|r: &&SweepRecord| r.k == k) {
            records.push(last.clone());
            continue;
        }
        let mut rec = SweepRecord {
            k,
            level: None,
            period: None,
            slope: None,
            period_bound: None,
            el_residual: None,
            energy_error: None,
            accepted: false,
            note: String::new(),
        };
        let warm = match &prev {
            Some(p) => {
                let last = p.images().last().expect("non-empty");
                (action(l, last, k)? < -opts.search.threshold).then(|| p.clone())
            }
            None => None,
        };
        let path = match warm {
            Some(p) => Ok(p),
            None => cold_path(l, k, opts),
        };
        let outcome = path.and_then(|p| relax_minimax(l, k, &p, &opts.minimax));
        match outcome {
            Ok(res) => {
                rec.level = Some(res.level);
                if let Some(orbit) = &res.orbit {
                    rec.period = Some(orbit.period());
                }
                if let Some(r) = &res.residuals {
                    rec.el_residual = Some(r.el_residual);
                    rec.energy_error = Some(r.energy_error);
                }
                rec.accepted = res.verified;
                rec.note = res.failure.clone().unwrap_or_default();
                if res.verified {
                    prev = Some(res.path);
                }
            }
            Err(e) => rec.note = e.to_string(),
        }
        records.push(rec);
    }
    // slopes from neighbouring successful levels
    let levels: Vec<Option<f64>> = records.iter().map(|r| if r.accepted { r.level } else { None }).collect();
    for i in 0..records.len() {
        let Some(ci) = levels[i] else { continue };
        let mut slope: Option<f64> = None;
        let left = (0..i).rev().find(|&j| levels[j].is_some() && ks[j] < ks[i]);
        let right = (i + 1..records.len()).find(|&j| levels[j].is_some() && ks[j] > ks[i]);
        for j in [left, right].into_iter().flatten() {
            let s = ((levels[j].expect("checked") - ci) / (ks[j] - ks[i])).abs();
            slope = Some(slope.map_or(s, |m: f64| m.max(s)));
        }
        let m = slope.unwrap_or(SLOPE_RANGE.1).clamp(SLOPE_RANGE.0, SLOPE_RANGE.1);
        let bound = m + 2.0;
        let r = &mut records[i];
        r.slope = Some(m);
        r.period_bound = Some(bound);
        if r.period.is_some_and(|t| t > bound) {
            r.accepted = false;
            r.note = format!("period {:.6} exceeds M(k)+2 = {bound:.6}", r.period.unwrap_or(f64::NAN));
        }
    }
    Ok(records)
}
