//! Paths of loops and their relaxation to a mountain-pass saddle.

use crate::error::{Error, Result};
use crate::flow::{refine_critical, RefineOptions, Residuals};
use crate::jacobi::hessian_spectrum;
use crate::loopspace::{action, d_action, loop_length, resample, EndpointMode, FreeTimeLoop, MetricOperator, MetricWeights};
use crate::systems::Lagrangian;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// A discrete path `Γ(s₀), …, Γ(s_{M−1})` with pinned endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct PathOfLoops {
    images: Vec<FreeTimeLoop>,
}

impl PathOfLoops {
    pub fn new(images: Vec<FreeTimeLoop>) -> Result<Self> {
        let first = images.first().ok_or_else(|| Error::invalid("a path needs at least two images"))?;
        if images.len() < 2 {
            return Err(Error::invalid("a path needs at least two images"));
        }
        for im in &images {
            if im.n() != first.n() || im.mode() != first.mode() || im.dim() != first.dim() {
                return Err(Error::invalid("path images must share node count, dimension and endpoint mode"));
            }
            if im.winding() != first.winding() {
                return Err(Error::invalid("path images must share the winding class"));
            }
        }
        Ok(Self { images })
    }

    pub fn images(&self) -> &[FreeTimeLoop] {
        &self.images
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn actions<L: Lagrangian + Sync + ?Sized>(&self, l: &L, k: f64) -> Result<Vec<f64>> {
        self.images.par_iter().map(|im| action(l, im, k)).collect()
    }

    /// Replaces the pinned terminal image (same shape required).
    pub fn with_terminal(&self, last: FreeTimeLoop) -> Result<Self> {
        let mut images = self.images.clone();
        *images.last_mut().expect("non-empty") = last;
        Self::new(images)
    }
}

/// Straight interpolation of node positions between a constant loop and a
/// negative-action loop, with the period interpolated logarithmically.
pub fn init_path(const_loop: &FreeTimeLoop, neg_loop: &FreeTimeLoop, m_images: usize) -> Result<PathOfLoops> {
    if m_images < 2 {
        return Err(Error::invalid("a path needs at least two images"));
    }
    if const_loop.winding().iter().any(|w| *w != 0) || neg_loop.winding().iter().any(|w| *w != 0) {
        return Err(Error::invalid("both path endpoints must be contractible"));
    }
    if const_loop.mode() != neg_loop.mode() || const_loop.dim() != neg_loop.dim() {
        return Err(Error::invalid("endpoints differ in endpoint mode or dimension"));
    }
    let start = if const_loop.n() == neg_loop.n() {
        const_loop.clone()
    } else {
        resample(const_loop, neg_loop.n())?
    };
    if start.mode() == EndpointMode::Fixed && start.node(0).iter().zip(neg_loop.node(0)).any(|(a, b)| (a - b).abs() > 1e-12) {
        return Err(Error::invalid("based endpoints must share the base point"));
    }
    let (a, b) = (start.nodes(), neg_loop.nodes());
    let (la, lb) = (start.period().ln(), neg_loop.period().ln());
    let mut images = Vec::with_capacity(m_images);
    images.push(start.clone());
    for j in 1..m_images - 1 {
        let s = j as f64 / (m_images - 1) as f64;
        let nodes: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect();
        let t = (la + s * (lb - la)).exp();
        images.push(match start.mode() {
            EndpointMode::Closed => {
                let d = start.dim();
                FreeTimeLoop::closed(d, nodes[..start.n() * d].to_vec(), vec![0; d], t)?
            }
            EndpointMode::Fixed => FreeTimeLoop::fixed(start.dim(), nodes, t)?,
        });
    }
    images.push(neg_loop.clone());
    PathOfLoops::new(images)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinimaxOptions {
    /// Stop when the gradient norm at the highest image falls below this.
    pub gtol: f64,
    pub max_iter: usize,
    /// Re-equidistribute the images every this many iterations.
    pub reparam_every: usize,
    pub initial_step: f64,
    /// Step of the highest image relative to the others.
    pub climb_damping: f64,
    /// Node count used for Newton refinement of the highest image.
    pub refine_nodes: usize,
    /// Try refining the highest image every this many iterations once the
    /// path maximum has settled (0 disables).
    pub refine_every: usize,
    /// Accept the refined orbit only if `T ≤ period_bound`.
    pub period_bound: Option<f64>,
    /// Tolerance on `|mean E − k|` for a verified orbit.
    pub energy_tol: f64,
    pub refine: RefineOptions,
    pub weights: MetricWeights,
}

impl Default for MinimaxOptions {
    fn default() -> Self {
        Self {
            gtol: 1e-3,
            max_iter: 400,
            reparam_every: 5,
            initial_step: 1e-3,
            climb_damping: 0.5,
            refine_nodes: 256,
            refine_every: 25,
            period_bound: None,
            energy_tol: 1e-8,
            refine: RefineOptions::default(),
            weights: MetricWeights::Completing,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimaxResult {
    /// `c(k)`: the refined saddle action when verified, else the path max.
    pub level: f64,
    /// Highest image of the relaxed path, before refinement.
    pub argmax: FreeTimeLoop,
    pub orbit: Option<FreeTimeLoop>,
    pub residuals: Option<Residuals>,
    pub verified: bool,
    /// Lowest second-variation eigenvalue outside the reparametrization mode.
    pub bottom_eigenvalue: Option<f64>,
    pub period_bound: Option<f64>,
    pub iterations: usize,
    pub path: PathOfLoops,
    /// Why an orbit was rejected, if it was.
    pub failure: Option<String>,
}

struct ImageEval {
    action: f64,
    /// `d𝒜ₖ` over free coordinates
    cot: Vec<f64>,
    /// metric gradient over free coordinates
    grad: Vec<f64>,
    op: MetricOperator,
}

fn evaluate<L: Lagrangian + ?Sized>(l: &L, k: f64, lp: &FreeTimeLoop, weights: MetricWeights) -> Result<ImageEval> {
    let parts = d_action(l, lp, k)?;
    let cot = parts.differential.to_free();
    let op = MetricOperator::new(l.manifold(), lp, weights);
    let grad = op.solve(&cot)?;
    Ok(ImageEval {
        action: parts.value,
        cot,
        grad,
        op,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Moves interior images to equal metric spacing along the path.
fn equidistribute<L: Lagrangian + ?Sized>(l: &L, images: &mut [FreeTimeLoop], weights: MetricWeights) -> Result<()> {
    let m = images.len();
    let z: Vec<Vec<f64>> = images.iter().map(|im| im.to_free()).collect();
    let mut arc = vec![0.0; m];
    for i in 1..m {
        let diff: Vec<f64> = z[i].iter().zip(&z[i - 1]).map(|(a, b)| a - b).collect();
        let op = MetricOperator::new(l.manifold(), &images[i - 1], weights);
        arc[i] = arc[i - 1] + dot(&op.apply(&diff), &diff).max(0.0).sqrt();
    }
    let total = arc[m - 1];
    if !(total > 0.0) {
        return Ok(());
    }
    let mut seg = 0;
    let mut out = Vec::with_capacity(m - 2);
    for j in 1..m - 1 {
        let target = total * j as f64 / (m - 1) as f64;
        while seg + 2 < m && arc[seg + 1] < target {
            seg += 1;
        }
        let span = arc[seg + 1] - arc[seg];
        let s = if span > 0.0 { (target - arc[seg]) / span } else { 0.0 };
        let zi: Vec<f64> = z[seg].iter().zip(&z[seg + 1]).map(|(a, b)| a + s * (b - a)).collect();
        out.push(images[0].from_free(&zi)?);
    }
    for (j, im) in out.into_iter().enumerate() {
        images[j + 1] = im;
    }
    Ok(())
}

struct Refined {
    orbit: FreeTimeLoop,
    residuals: Residuals,
    level: f64,
    bottom: f64,
    failure: Option<String>,
}

/// Newton refinement of the highest image and the checks a verified orbit
/// must pass.
fn refine_top<L: Lagrangian + ?Sized>(l: &L, k: f64, top: &FreeTimeLoop, path_max: f64, opts: &MinimaxOptions) -> Result<Refined> {
    let start = if top.n() < opts.refine_nodes {
        resample(top, opts.refine_nodes)?
    } else {
        top.clone()
    };
    let (orbit, residuals) = refine_critical(l, k, &start, &opts.refine)?;
    let level = action(l, &orbit, k)?;
    let len = loop_length(l.manifold(), &orbit);
    let bottom = hessian_spectrum(l, k, &orbit, 4, opts.weights)?.bottom();
    let failure = if len < 1e-6 {
        Some("refined loop degenerated to a point".into())
    } else if orbit.winding().iter().any(|w| *w != 0) {
        Some("refined loop left the trivial class".into())
    } else if residuals.energy_error > opts.energy_tol {
        Some(format!("mean energy off by {:.3e}", residuals.energy_error))
    } else if level > path_max + LEVEL_SLACK * path_max.abs().max(1e-3) {
        Some(format!("refined level {level:.6} lies above the path maximum {path_max:.6}"))
    } else if opts.period_bound.is_some_and(|b| orbit.period() > b) {
        Some(format!("period {:.6} exceeds the bound", orbit.period()))
    } else {
        None
    };
    Ok(Refined {
        orbit,
        residuals,
        level,
        bottom,
        failure,
    })
}

/// Relative slack between a refined saddle level and the relaxed path max.
const LEVEL_SLACK: f64 = 0.05;

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, a) in v.iter().enumerate() {
        if *a > v[best] {
            best = i;
        }
    }
    best
}

fn geometry_lost(idx: usize, m: usize) -> Result<()> {
    if idx == 0 || idx + 1 == m {
        return Err(Error::GeometryLost(format!(
            "path maximum sits at endpoint {idx} of {m} images"
        )));
    }
    Ok(())
}

/// Relaxes `path` towards a mountain-pass saddle of `𝒜ₖ` and refines the
/// highest image.
///
/// Interior images take gradient steps with the component along the path
/// removed; the highest image instead reverses that component (it climbs
/// along the path while descending across it) at a damped step. Images are
/// re-equidistributed in the loop-space metric every few iterations.
pub fn relax_minimax<L: Lagrangian + Sync + ?Sized>(l: &L, k: f64, path: &PathOfLoops, opts: &MinimaxOptions) -> Result<MinimaxResult> {
    let m = path.len();
    if m < 3 {
        return Err(Error::invalid("relaxation needs at least one interior image"));
    }
    let mut images = path.images().to_vec();
    let mut steps = vec![opts.initial_step; m];
    steps[0] = 0.0;
    let mut climb_step = opts.initial_step * opts.climb_damping;
    let mut last_climb_grad = f64::INFINITY;
    let mut iterations = 0;
    let mut top;
    let mut early: Option<Refined> = None;
    let mut top_history: Vec<f64> = Vec::new();
    loop {
        let evals: Vec<ImageEval> = images
            .par_iter()
            .map(|im| evaluate(l, k, im, opts.weights))
            .collect::<Result<_>>()?;
        let actions: Vec<f64> = evals.iter().map(|e| e.action).collect();
        top = argmax(&actions);
        geometry_lost(top, m)?;
        let climb_grad = dot(&evals[top].cot, &evals[top].grad).max(0.0).sqrt();
        if climb_grad <= opts.gtol || iterations >= opts.max_iter {
            break;
        }
        // once the path maximum settles, Newton usually finishes faster
        // than further relaxation
        top_history.push(actions[top]);
        if opts.refine_every > 0 && iterations > 0 && iterations % opts.refine_every == 0 {
            let back = top_history[top_history.len() - 1 - opts.refine_every.min(top_history.len() - 1)];
            if (actions[top] - back).abs() <= 0.02 * actions[top].abs() {
                let quick = MinimaxOptions {
                    refine: RefineOptions {
                        max_iter: opts.refine.max_iter.min(15),
                        ..opts.refine
                    },
                    ..*opts
                };
                let attempt = refine_top(l, k, &images[top], actions[top], &quick);
                if let Ok(r) = attempt {
                    if r.failure.is_none() {
                        early = Some(r);
                        break;
                    }
                }
            }
        }
        if climb_grad > last_climb_grad {
            climb_step *= 0.5;
        } else {
            climb_step = (climb_step * 1.2).min(opts.initial_step * 1e3);
        }
        last_climb_grad = climb_grad;
        iterations += 1;
        let z: Vec<Vec<f64>> = images.iter().map(|im| im.to_free()).collect();
        let updated: Vec<(FreeTimeLoop, f64)> = (1..m - 1)
            .into_par_iter()
            .map(|i| -> Result<(FreeTimeLoop, f64)> {
                let e = &evals[i];
                let tau: Vec<f64> = z[i + 1].iter().zip(&z[i - 1]).map(|(a, b)| a - b).collect();
                let tnorm = dot(&e.op.apply(&tau), &tau).max(0.0).sqrt();
                // ⟨Y, τ̂⟩ = d𝒜(τ̂)
                let along = if tnorm > 0.0 { dot(&e.cot, &tau) / tnorm } else { 0.0 };
                let factor = if i == top { 2.0 } else { 1.0 };
                let dir: Vec<f64> = e
                    .grad
                    .iter()
                    .zip(&tau)
                    .map(|(g, t)| g - factor * along * t / tnorm.max(f64::MIN_POSITIVE))
                    .collect();
                let lp = &images[i];
                let kappa = 4.0 / (lp.period() * opts.weights.g_solver(lp.period()));
                let last = dir.len() - 1;
                let mut s = if i == top { climb_step } else { steps[i] };
                let slope = dot(&e.op.apply(&dir), &dir);
                loop {
                    let node_s = s / (1.0 + s * kappa);
                    let mut trial: Vec<f64> = z[i].iter().zip(&dir).map(|(a, d)| a - node_s * d).collect();
                    trial[last] = z[i][last] - s * dir[last];
                    let ok = trial[last] > 0.0;
                    if ok {
                        if let Ok(cand) = lp.from_free(&trial) {
                            if i == top {
                                return Ok((cand, s));
                            }
                            // perpendicular steps must not raise the action
                            if let Ok(a) = action(l, &cand, k) {
                                if a <= e.action - 0.25 * node_s * slope {
                                    return Ok((cand, (2.0 * s).min(1.0)));
                                }
                            }
                        }
                    }
                    s *= 0.5;
                    if s < 1e-16 {
                        return Ok((lp.clone(), opts.initial_step));
                    }
                }
            })
            .collect::<Result<_>>()?;
        for (j, (im, s)) in updated.into_iter().enumerate() {
            let i = j + 1;
            if i != top {
                steps[i] = s;
            }
            images[i] = im;
        }
        if opts.reparam_every > 0 && iterations % opts.reparam_every == 0 {
            equidistribute(l, &mut images, opts.weights)?;
        }
    }
    let path = PathOfLoops::new(images)?;
    let argmax_loop = path.images()[top].clone();
    let path_max = action(l, &argmax_loop, k)?;
    let refined = match early {
        Some(r) => Ok(r),
        None => refine_top(l, k, &argmax_loop, path_max, opts),
    };
    let mut result = MinimaxResult {
        level: path_max,
        argmax: argmax_loop,
        orbit: None,
        residuals: None,
        verified: false,
        bottom_eigenvalue: None,
        period_bound: opts.period_bound,
        iterations,
        path,
        failure: None,
    };
    match refined {
        Ok(r) => {
            result.bottom_eigenvalue = Some(r.bottom);
            result.failure = r.failure;
            result.verified = result.failure.is_none();
            if result.verified {
                result.level = r.level;
            }
            result.orbit = Some(r.orbit);
            result.residuals = Some(r.residuals);
        }
        Err(e) => result.failure = Some(e.to_string()),
    }
    Ok(result)
}
