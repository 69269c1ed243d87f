//! Armijo gradient descent of `𝒜ₖ` along the weighted-metric gradient.

use crate::error::{Error, Result};
use crate::loopspace::{d_action, format_loop, FreeTimeLoop, MetricOperator, MetricWeights};
use crate::systems::{Lagrangian, TorusManifold};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Why a descent run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Converged,
    /// The period fell below the floor.
    TCollapse,
    /// The period rose above the ceiling.
    TBlowup,
    /// Iteration budget exhausted or the line search failed.
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DescentOptions {
    pub gtol: f64,
    pub max_iter: usize,
    pub t_floor: f64,
    pub t_ceiling: f64,
    pub initial_step: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    pub weights: MetricWeights,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self {
            gtol: 1e-6,
            max_iter: 20_000,
            t_floor: 1e-3,
            t_ceiling: 1e3,
            initial_step: 1e-2,
            armijo: 0.5,
            weights: MetricWeights::Completing,
        }
    }
}

impl DescentOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gtol", self.gtol),
            ("t_floor", self.t_floor),
            ("t_ceiling", self.t_ceiling),
            ("initial_step", self.initial_step),
            ("armijo", self.armijo),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.armijo >= 1.0 || self.t_floor >= self.t_ceiling {
            return Err(Error::invalid("need armijo < 1 and t_floor < t_ceiling"));
        }
        Ok(())
    }
}

/// State of a descent run, with per-iteration history (index 0 is the start).
#[derive(Debug, Clone)]
pub struct DescentState {
    pub loop_: FreeTimeLoop,
    pub action: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub action_history: Vec<f64>,
    pub period_history: Vec<f64>,
    pub grad_history: Vec<f64>,
    /// Largest value of `dist(p₁,p₂)² / (s·(𝒜(p₁) − 𝒜(p₂)))` over accepted
    /// steps of size `s`; the Armijo rule with constant `c` keeps it at most
    /// `1/c`.
    pub descent_ratio: f64,
}

impl DescentState {
    /// Descent log rows: iteration, action, gradient norm, period.
    pub fn write_log<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "iteration,action,gradnorm,T")?;
        for i in 0..self.action_history.len() {
            writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e}",
                i, self.action_history[i], self.grad_history[i], self.period_history[i]
            )?;
        }
        Ok(())
    }

    /// Whether the action history stays inside a band excluding zero.
    pub fn band_excludes_zero(&self, margin: f64) -> bool {
        let lo = self.action_history.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.action_history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        lo > margin || hi < -margin
    }
}

struct Point {
    lp: FreeTimeLoop,
    action: f64,
    grad: Vec<f64>,
    /// `c · grad` restricted to the nodes and to the period
    node_sq: f64,
    period_sq: f64,
    grad_norm: f64,
}

/// Objective value and differential (as pairing coefficients over free
/// coordinates, period last) at a loop.
pub(crate) type Objective<'a> = dyn Fn(&FreeTimeLoop) -> Result<(f64, Vec<f64>)> + 'a;

fn evaluate(manifold: &TorusManifold, obj: &Objective, lp: FreeTimeLoop, weights: MetricWeights) -> Result<Point> {
    let (value, cot) = obj(&lp)?;
    let op = MetricOperator::new(manifold, &lp, weights);
    let g = op.solve(&cot)?;
    let m = g.len() - 1;
    let node_sq: f64 = g[..m].iter().zip(&cot[..m]).map(|(a, b)| a * b).sum();
    let period_sq = g[m] * cot[m];
    let gn2 = node_sq + period_sq;
    if !gn2.is_finite() || !value.is_finite() {
        return Err(Error::numeric(format!(
            "non-finite objective or gradient at T={:e}; state:\n{}",
            lp.period(),
            format_loop(&lp)
        )));
    }
    Ok(Point {
        lp,
        action: value,
        grad: g,
        node_sq,
        period_sq,
        grad_norm: gn2.max(0.0).sqrt(),
    })
}

/// Stiffness of the kinetic term relative to the metric on node
/// differences: the Hessian of `∫|x'|²/(2T)` is `1/(T g(T))` times the
/// difference part of the metric, up to the size of `L_vv`, for which a
/// safety factor of 4 is allowed.
fn kinetic_stiffness(lp: &FreeTimeLoop, weights: MetricWeights) -> f64 {
    4.0 / (lp.period() * weights.g_solver(lp.period()))
}

/// Runs backtracking gradient descent on `𝒜ₖ` from `start`.
///
/// A step of size `s` moves the period by `−s Y_T` and the nodes by
/// `−s/(1 + sκ) Y_x`, where `κ` is the kinetic stiffness: this is the
/// semi-implicit treatment of the kinetic term, without which small periods
/// force steps of order `T³`. Accepted steps satisfy the Armijo condition
/// against the predicted decrease; the trial step doubles after every
/// acceptance and halves on rejection. A rejection while the node step is
/// capped by the stiffness (`sκ > 1`) also doubles the stiffness, which
/// lets the period keep moving when the potential part of the Hessian, not
/// the kinetic one, limits the node step (large `T`).
pub fn descend<L: Lagrangian + ?Sized>(l: &L, k: f64, start: &FreeTimeLoop, opts: &DescentOptions) -> Result<DescentState> {
    let obj = |lp: &FreeTimeLoop| -> Result<(f64, Vec<f64>)> {
        let parts = d_action(l, lp, k)?;
        Ok((parts.value, parts.differential.to_free()))
    };
    descend_objective(l.manifold(), &obj, 1.0, start, opts)
}

/// Descent of an arbitrary objective; `stiffness_scale` multiplies the
/// kinetic stiffness (objectives that divide the action by `T` pass `1/T`).
pub(crate) fn descend_objective(
    manifold: &TorusManifold,
    obj: &Objective,
    stiffness_scale: f64,
    start: &FreeTimeLoop,
    opts: &DescentOptions,
) -> Result<DescentState> {
    opts.validate()?;
    let mut p = evaluate(manifold, obj, start.clone(), opts.weights)?;
    let mut state = DescentState {
        loop_: p.lp.clone(),
        action: p.action,
        grad_norm: p.grad_norm,
        step: opts.initial_step,
        iterations: 0,
        termination: Termination::Stalled,
        action_history: vec![p.action],
        period_history: vec![p.lp.period()],
        grad_history: vec![p.grad_norm],
        descent_ratio: 0.0,
    };
    let mut step = opts.initial_step;
    // extra stiffness learned from rejections in the node-capped regime
    let mut stiff = 1.0;
    let mut iter = 0;
    let termination = loop {
        if p.grad_norm <= opts.gtol {
            break Termination::Converged;
        }
        if p.lp.period() < opts.t_floor {
            break Termination::TCollapse;
        }
        if p.lp.period() > opts.t_ceiling {
            break Termination::TBlowup;
        }
        if iter >= opts.max_iter {
            break Termination::Stalled;
        }
        let z = p.lp.to_free();
        let m = z.len() - 1;
        let kappa = stiffness_scale * kinetic_stiffness(&p.lp, opts.weights);
        let mut accepted = None;
        let mut dist_sq = 0.0;
        while step > 1e-300 {
            let node_step = step / (1.0 + step * stiff * kappa);
            let mut trial: Vec<f64> = z.iter().zip(&p.grad).map(|(a, g)| a - node_step * g).collect();
            trial[m] = z[m] - step * p.grad[m];
            let predicted = node_step * p.node_sq + step * p.period_sq;
            if trial[m] > 0.0 {
                if let Ok(lp) = p.lp.from_free(&trial) {
                    let q = evaluate(manifold, obj, lp, opts.weights)?;
                    if q.action <= p.action - opts.armijo * predicted {
                        dist_sq = node_step * node_step * p.node_sq + step * step * p.period_sq;
                        accepted = Some(q);
                        break;
                    }
                }
            }
            if step * stiff * kappa > 1.0 {
                stiff *= 2.0;
            }
            step *= 0.5;
        }
        let Some(q) = accepted else {
            break Termination::Stalled;
        };
        let decrease = p.action - q.action;
        if decrease > 0.0 {
            state.descent_ratio = state.descent_ratio.max(dist_sq / (step * decrease));
        }
        p = q;
        iter += 1;
        state.action_history.push(p.action);
        state.period_history.push(p.lp.period());
        state.grad_history.push(p.grad_norm);
        state.step = step;
        step *= 2.0;
        stiff = (0.5 * stiff).max(1.0);
    };
    state.loop_ = p.lp;
    state.action = p.action;
    state.grad_norm = p.grad_norm;
    state.iterations = iter;
    state.termination = termination;
    Ok(state)
}
