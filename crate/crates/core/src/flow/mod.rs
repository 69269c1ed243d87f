//! Gradient flow of the free-period action, Newton refinement of its
//! critical points, Euler-Lagrange integration for cross-checks, and
//! diagnostics for sequences that lose compactness.

mod descent;
mod fixed;
mod integrate;
mod measure;
mod refine;

pub use descent::{descend, DescentOptions, DescentState, Termination};
pub(crate) use descent::descend_objective;
pub use fixed::{minimize_fixed_period, FixedPeriodOptions, FixedPeriodResult};
pub use integrate::{acceleration, integrate_el, integrate_el_sampled, OrbitSample};
pub use measure::{blowup_diagnosis, collapse_point, diagnose_ps, empirical_measure, EmpiricalMeasure, MeasureAtom, MeasureSummary, PsDiagnosis};
pub use refine::{refine_critical, residuals, RefineOptions, Residuals};


use crate::loopspace::FreeTimeLoop;
use crate::systems::{Lagrangian, TonelliLagrangian};

/// Growth constants `(a₁, a₂)` with `L(x,v) ≥ a₁|v|_x² − a₂`.
///
/// From `½|v|² − |θ||v| − |ψ| ≥ ¼|v|² − |θ|² − |ψ|`.
pub fn growth_constants(l: &TonelliLagrangian) -> (f64, f64) {
    let u_amp = l.manifold().conformal_field().amplitude_bound();
    let theta: f64 = l.one_form().iter().map(|f| f.amplitude_bound().powi(2)).sum::<f64>().sqrt();
    let theta = theta * u_amp.exp();
    (0.25, theta * theta + l.potential().amplitude_bound())
}

/// Checks `length²/T ≤ (A₁ + (a₂+|k|)A₂)/a₁ + 1` for a loop with
/// `𝒜ₖ ≤ A₁` and `T ≤ A₂` (taking `A₁, A₂` at the loop itself).
pub fn length_bound_holds(l: &TonelliLagrangian, k: f64, lp: &FreeTimeLoop) -> crate::Result<bool> {
    let (a1, a2) = growth_constants(l);
    let a = crate::loopspace::action(l, lp, k)?;
    let t = lp.period();
    let len = crate::loopspace::loop_length(l.manifold(), lp);
    Ok(len * len / t <= (a + (a2 + k.abs()) * t) / a1 + 1.0)
}
