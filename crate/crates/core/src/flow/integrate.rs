//! Classical RK4 integration of the Euler-Lagrange equations
//! `d/dt L_v = L_x`, solved for the acceleration.

use crate::error::{Error, Result};
use crate::systems::{energy_from_jet, Jet, Lagrangian};
use nalgebra::{DMatrix, DVector};

/// A sampled trajectory in lifted coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitSample {
    pub dim: usize,
    pub times: Vec<f64>,
    /// `times.len() × dim`, row-major
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    pub energies: Vec<f64>,
    /// `max |E(t) − E(0)| / max(1, |E(0)|)` over the run.
    pub energy_drift: f64,
}

impl OrbitSample {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.velocities[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last_position(&self) -> &[f64] {
        self.position(self.len() - 1)
    }

    pub fn last_velocity(&self) -> &[f64] {
        self.velocity(self.len() - 1)
    }
}

/// Acceleration `L_vv⁻¹ (L_x − L_vx v)`. `jet` must hold second derivatives.
pub(crate) fn acceleration_from_jet(jet: &Jet, v: &[f64]) -> Result<Vec<f64>> {
    let d = v.len();
    let rhs = DVector::from_fn(d, |j, _| jet.lx[j] - (0..d).map(|i| jet.lxv[i * d + j] * v[i]).sum::<f64>());
    let lvv = DMatrix::from_row_slice(d, d, &jet.lvv);
    let a = lvv
        .cholesky()
        .ok_or_else(|| Error::numeric("L_vv not positive definite during integration"))?
        .solve(&rhs);
    Ok(a.iter().copied().collect())
}

/// Acceleration of the Euler-Lagrange flow at `(x, v)`.
pub fn acceleration<L: Lagrangian + ?Sized>(l: &L, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let mut jet = Jet::new(l.dim());
    l.eval(x, v, true, &mut jet);
    acceleration_from_jet(&jet, v)
}

/// One RK4 step of the first-order system `(x, v)' = (v, a(x, v))`.
pub(crate) fn rk4_step<L: Lagrangian + ?Sized>(l: &L, x: &[f64], v: &[f64], dt: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = x.len();
    let shift = |base: &[f64], dir: &[f64], h: f64| -> Vec<f64> { base.iter().zip(dir).map(|(b, k)| b + h * k).collect() };
    let k1x = v.to_vec();
    let k1v = acceleration(l, x, v)?;
    let (x2, v2) = (shift(x, &k1x, 0.5 * dt), shift(v, &k1v, 0.5 * dt));
    let k2x = v2.clone();
    let k2v = acceleration(l, &x2, &v2)?;
    let (x3, v3) = (shift(x, &k2x, 0.5 * dt), shift(v, &k2v, 0.5 * dt));
    let k3x = v3.clone();
    let k3v = acceleration(l, &x3, &v3)?;
    let (x4, v4) = (shift(x, &k3x, dt), shift(v, &k3v, dt));
    let k4x = v4.clone();
    let k4v = acceleration(l, &x4, &v4)?;
    let mut nx = vec![0.0; d];
    let mut nv = vec![0.0; d];
    for c in 0..d {
        nx[c] = x[c] + dt / 6.0 * (k1x[c] + 2.0 * k2x[c] + 2.0 * k3x[c] + k4x[c]);
        nv[c] = v[c] + dt / 6.0 * (k1v[c] + 2.0 * k2v[c] + 2.0 * k3v[c] + k4v[c]);
    }
    if nx.iter().chain(&nv).any(|c| !c.is_finite()) {
        return Err(Error::numeric("non-finite state in Euler-Lagrange integration"));
    }
    Ok((nx, nv))
}

/// Integrates from `(x₀, v₀)` over `[0, t_span]` with step at most `dt`
/// (the step is shrunk so that it divides `t_span`). Every step is recorded.
pub fn integrate_el<L: Lagrangian + ?Sized>(l: &L, x0: &[f64], v0: &[f64], t_span: f64, dt: f64) -> Result<OrbitSample> {
    integrate_el_sampled(l, x0, v0, t_span, dt, 1)
}

/// As [`integrate_el`] but only every `stride`-th step (and the last) is kept.
pub fn integrate_el_sampled<L: Lagrangian + ?Sized>(
    l: &L,
    x0: &[f64],
    v0: &[f64],
    t_span: f64,
    dt: f64,
    stride: usize,
) -> Result<OrbitSample> {
    let d = l.dim();
    if x0.len() != d || v0.len() != d {
        return Err(Error::invalid("initial condition has wrong dimension"));
    }
    if !(dt > 0.0) || !(t_span >= 0.0) || !t_span.is_finite() {
        return Err(Error::invalid("time step must be positive and the span non-negative"));
    }
    let stride = stride.max(1);
    let steps = (t_span / dt).ceil() as usize;
    let h = if steps == 0 { 0.0 } else { t_span / steps as f64 };
    let mut jet = Jet::new(d);
    let mut energy = |x: &[f64], v: &[f64]| {
        l.eval(x, v, false, &mut jet);
        energy_from_jet(&jet, v)
    };
    let e0 = energy(x0, v0);
    let mut out = OrbitSample {
        dim: d,
        times: vec![0.0],
        positions: x0.to_vec(),
        velocities: v0.to_vec(),
        energies: vec![e0],
        energy_drift: 0.0,
    };
    let (mut x, mut v) = (x0.to_vec(), v0.to_vec());
    let mut drift: f64 = 0.0;
    for s in 1..=steps {
        let (nx, nv) = rk4_step(l, &x, &v, h)?;
        x = nx;
        v = nv;
        let e = energy(&x, &v);
        drift = drift.max((e - e0).abs());
        if s % stride == 0 || s == steps {
            out.times.push(s as f64 * h);
            out.positions.extend_from_slice(&x);
            out.velocities.extend_from_slice(&v);
            out.energies.push(e);
        }
    }
    out.energy_drift = drift / e0.abs().max(1.0);
    Ok(out)
}
