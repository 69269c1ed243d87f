//! Time-averaged measures carried by loops and the diagnosis of
//! Palais-Smale failures (period collapse or blow-up).

use super::descent::{DescentState, Termination};
use crate::error::Result;
use crate::loopspace::{action, mean_energy, node_velocities, EndpointMode, FreeTimeLoop};
use crate::systems::{Jet, Lagrangian};
use serde::{Deserialize, Serialize};

/// One atom of the discrete measure: a node with its time weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureAtom {
    /// position reduced to `[0,1)^d`
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub weight: f64,
}

/// Probability measure `(1/T) ∫₀ᵀ δ_(y,ẏ) dt` of a loop, discretized by
/// the lumped quadrature weights of the nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    pub bins: usize,
    pub dim: usize,
    /// Largest speed; speed bins split `[0, speed_max]` evenly.
    pub speed_max: f64,
    /// Row-major joint histogram: position cell (`bins^d`, coordinate 0
    /// slowest), then speed bin.
    pub histogram: Vec<f64>,
    pub atoms: Vec<MeasureAtom>,
    pub summary: MeasureSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureSummary {
    pub mean_energy: f64,
    /// `𝒜ₖ / T = ∫(L + k) dμ`
    pub action_per_time: f64,
    /// `∫ v dμ`, the rotation vector of the measure.
    pub mean_velocity: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn total_mass(&self) -> f64 {
        self.histogram.iter().sum()
    }

    /// Mass of the atoms whose position satisfies `pred`.
    pub fn mass_where(&self, pred: impl Fn(&[f64]) -> bool) -> f64 {
        self.atoms.iter().filter(|a| pred(&a.x)).map(|a| a.weight).sum()
    }

    /// Position marginal of the histogram.
    pub fn position_marginal(&self) -> Vec<f64> {
        self.histogram.chunks(self.bins).map(|c| c.iter().sum()).collect()
    }
}

/// Lumped quadrature weights of the nodes (summing to 1); for closed
/// loops node `N` is merged into node 0.
pub(crate) fn node_weights(lp: &FreeTimeLoop) -> Vec<f64> {
    let n = lp.n();
    let hs = 2.0 / n as f64;
    let mut w: Vec<f64> = (0..=n)
        .map(|i| {
            if i % 2 == 1 {
                4.0 * hs / 6.0
            } else if i == 0 || i == n {
                hs / 6.0
            } else {
                2.0 * hs / 6.0
            }
        })
        .collect();
    if lp.mode() == EndpointMode::Closed {
        w[0] += w[n];
        w[n] = 0.0;
    }
    w
}

pub fn empirical_measure<L: Lagrangian + ?Sized>(l: &L, k: f64, lp: &FreeTimeLoop, bins: usize) -> Result<EmpiricalMeasure> {
    let bins = bins.max(1);
    let d = lp.dim();
    let n = lp.n();
    let weights = node_weights(lp);
    let vel = node_velocities(lp);
    let speed = |i: usize| vel[i * d..(i + 1) * d].iter().map(|c| c * c).sum::<f64>().sqrt();
    let speed_max = (0..=n).map(speed).fold(0.0, f64::max);
    let cells = bins.pow(d as u32);
    let mut histogram = vec![0.0; cells * bins];
    let mut atoms = Vec::with_capacity(n + 1);
    for i in 0..=n {
        if weights[i] == 0.0 {
            continue;
        }
        let x: Vec<f64> = lp.node(i).iter().map(|c| c.rem_euclid(1.0)).collect();
        let mut cell = 0;
        for c in x.iter() {
            cell = cell * bins + ((c * bins as f64) as usize).min(bins - 1);
        }
        let sb = if speed_max > 0.0 {
            ((speed(i) / speed_max * bins as f64) as usize).min(bins - 1)
        } else {
            0
        };
        histogram[cell * bins + sb] += weights[i];
        atoms.push(MeasureAtom {
            x,
            v: vel[i * d..(i + 1) * d].to_vec(),
            weight: weights[i],
        });
    }
    let t = lp.period();
    let mean_velocity = (0..d).map(|c| (lp.node(n)[c] - lp.node(0)[c]) / t).collect();
    Ok(EmpiricalMeasure {
        bins,
        dim: d,
        speed_max,
        histogram,
        atoms,
        summary: MeasureSummary {
            mean_energy: mean_energy(l, lp)?,
            action_per_time: action(l, lp, k)? / t,
            mean_velocity,
        },
    })
}

/// Outcome of a descent run, read as a Palais-Smale sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PsDiagnosis {
    Converged,
    /// The loop shrank to a point `q₀`; a genuine collapse needs
    /// `dψ(q₀) = 0` and `E(q₀, 0) = k`.
    TCollapse {
        q0: Vec<f64>,
        grad_psi: f64,
        energy_gap: f64,
    },
    /// The period diverged; the limit measure should be invariant with
    /// energy `k`, zero `(L+k)`-action and zero rotation.
    TBlowup {
        summary: MeasureSummary,
        energy_gap: f64,
        mean_velocity_norm: f64,
    },
    Stalled,
}

impl PsDiagnosis {
    pub fn verdict(&self) -> &'static str {
        match self {
            PsDiagnosis::Converged => "converged",
            PsDiagnosis::TCollapse { .. } => "t-collapse",
            PsDiagnosis::TBlowup { .. } => "t-blowup",
            PsDiagnosis::Stalled => "stalled",
        }
    }
}

/// Weighted mean of the lifted nodes, reduced to the fundamental domain.
pub fn collapse_point(lp: &FreeTimeLoop) -> Vec<f64> {
    let w = node_weights(lp);
    (0..lp.dim())
        .map(|c| {
            (0..=lp.n())
                .map(|i| w[i] * lp.node(i)[c])
                .sum::<f64>()
                .rem_euclid(1.0)
        })
        .collect()
}

pub fn diagnose_ps<L: Lagrangian + ?Sized>(l: &L, k: f64, state: &DescentState) -> Result<PsDiagnosis> {
    Ok(match state.termination {
        Termination::Converged => PsDiagnosis::Converged,
        Termination::Stalled => PsDiagnosis::Stalled,
        Termination::TCollapse => {
            let q0 = collapse_point(&state.loop_);
            let d = l.dim();
            let mut jet = Jet::new(d);
            l.eval(&q0, &vec![0.0; d], false, &mut jet);
            let scale = (-l.manifold().log_factor(&q0)).exp();
            let grad_psi = jet.lx.iter().map(|c| c * c).sum::<f64>().sqrt() * scale;
            PsDiagnosis::TCollapse {
                q0,
                grad_psi,
                // E(q, 0) = −L(q, 0)
                energy_gap: (-jet.value - k).abs(),
            }
        }
        Termination::TBlowup => blowup_diagnosis(l, k, &state.loop_)?,
    })
}

/// Reads a long-period loop as the tail of a Palais-Smale sequence with
/// diverging period and summarizes its measure.
pub fn blowup_diagnosis<L: Lagrangian + ?Sized>(l: &L, k: f64, lp: &FreeTimeLoop) -> Result<PsDiagnosis> {
    let m = empirical_measure(l, k, lp, 1)?;
    let mean_velocity_norm = m.summary.mean_velocity.iter().map(|c| c * c).sum::<f64>().sqrt();
    Ok(PsDiagnosis::TBlowup {
        energy_gap: (m.summary.mean_energy - k).abs(),
        summary: m.summary,
        mean_velocity_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::TonelliLagrangian;

    #[test]
    fn constant_loop_is_a_dirac_mass() {
        let l = TonelliLagrangian::mechanical_cos();
        let lp = FreeTimeLoop::constant(&[0.25, 0.5], 2.0, 16).unwrap();
        let m = empirical_measure(&l, 0.0, &lp, 8).unwrap();
        assert!((m.total_mass() - 1.0).abs() < 1e-12);
        assert_eq!(m.histogram.iter().filter(|w| **w > 0.0).count(), 1);
        // E(q₀, 0) = −ψ(q₀) = V(q₀) = cos(π/2)
        assert!(m.summary.mean_energy.abs() < 1e-15);
    }

    #[test]
    fn geodesic_measure() {
        let l = TonelliLagrangian::free(2).unwrap();
        let lp = FreeTimeLoop::straight(&[0.0, 0.0], &[1, 0], 1.0, 32).unwrap();
        let m = empirical_measure(&l, 0.5, &lp, 4).unwrap();
        assert!((m.summary.mean_energy - 0.5).abs() < 1e-14);
        assert_eq!(m.summary.mean_velocity, vec![1.0, 0.0]);
        assert!((m.total_mass() - 1.0).abs() < 1e-12);
        assert!((m.summary.action_per_time - 1.0).abs() < 1e-14);
    }
}

