//! Variational equations of the Euler-Lagrange flow and conjugate times.

use crate::error::{Error, Result};
use crate::flow::{acceleration, OrbitSample};
use crate::systems::Lagrangian;
use nalgebra::DMatrix;

/// Transition matrices of the linearized flow along a sampled orbit, in
/// coordinates `(δx, δv)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Monodromy {
    pub dim: usize,
    pub times: Vec<f64>,
    /// Base states `(x, v)` at each time.
    pub states: Vec<Vec<f64>>,
    /// `Φ(t)`, `2d × 2d`.
    pub matrices: Vec<DMatrix<f64>>,
    /// `max |det Φ(t) · det L_vv(t) / det L_vv(0) − 1|`: zero for an exact
    /// symplectic flow.
    pub det_drift: f64,
    /// Time at which the variational solution stopped being finite.
    pub overflow_time: Option<f64>,
}

impl Monodromy {
    /// Block `∂x(t)/∂v(0)`: initial vertical vectors mapped to the
    /// horizontal (projected) component.
    pub fn vertical_to_horizontal(&self, i: usize) -> DMatrix<f64> {
        let d = self.dim;
        self.matrices[i].view((0, d), (d, d)).into_owned()
    }

    /// `Φ(t)` in horizontal/vertical form: the lower block rows are the
    /// connection map `δv + Γ(v, δx)`.
    pub fn split_blocks<L: Lagrangian + ?Sized>(&self, l: &L, i: usize) -> DMatrix<f64> {
        let d = self.dim;
        let (x, v) = self.states[i].split_at(d);
        let mut out = self.matrices[i].clone();
        for col in 0..2 * d {
            let dx: Vec<f64> = (0..d).map(|r| self.matrices[i][(r, col)]).collect();
            let g = l.manifold().christoffel_apply(x, v, &dx);
            for r in 0..d {
                out[(d + r, col)] += g[r];
            }
        }
        out
    }
}

/// Jacobian of the first-order field `(v, a(x, v))`, by central differences
/// of the acceleration.
fn field_jacobian<L: Lagrangian + ?Sized>(l: &L, state: &[f64]) -> Result<DMatrix<f64>> {
    let d = state.len() / 2;
    let mut jac = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        jac[(i, d + i)] = 1.0;
    }
    let mut s = state.to_vec();
    for j in 0..2 * d {
        let h = 1e-6 * state[j].abs().max(1.0);
        s[j] = state[j] + h;
        let ap = acceleration(l, &s[..d], &s[d..])?;
        s[j] = state[j] - h;
        let am = acceleration(l, &s[..d], &s[d..])?;
        s[j] = state[j];
        for i in 0..d {
            jac[(d + i, j)] = (ap[i] - am[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

fn field<L: Lagrangian + ?Sized>(l: &L, state: &[f64], phi: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let d = state.len() / 2;
    let a = acceleration(l, &state[..d], &state[d..])?;
    let mut ds = state[d..].to_vec();
    ds.extend(a);
    Ok((ds, field_jacobian(l, state)? * phi))
}

/// One RK4 step of the orbit together with its variational equation.
fn step<L: Lagrangian + ?Sized>(l: &L, state: &[f64], phi: &DMatrix<f64>, h: f64) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let add = |s: &[f64], k: &[f64], c: f64| -> Vec<f64> { s.iter().zip(k).map(|(a, b)| a + c * b).collect() };
    let (k1, m1) = field(l, state, phi)?;
    let (k2, m2) = field(l, &add(state, &k1, 0.5 * h), &(phi + &m1 * (0.5 * h)))?;
    let (k3, m3) = field(l, &add(state, &k2, 0.5 * h), &(phi + &m2 * (0.5 * h)))?;
    let (k4, m4) = field(l, &add(state, &k3, h), &(phi + &m3 * h))?;
    let next: Vec<f64> = (0..state.len())
        .map(|i| state[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    let phin = phi + (m1 + m2 * 2.0 + m3 * 2.0 + m4) * (h / 6.0);
    Ok((next, phin))
}

fn lvv_det<L: Lagrangian + ?Sized>(l: &L, state: &[f64]) -> f64 {
    let d = state.len() / 2;
    let mut jet = crate::systems::Jet::new(d);
    l.eval(&state[..d], &state[d..], true, &mut jet);
    jet.lvv_matrix().determinant()
}

/// Integrates `Φ' = J(t) Φ`, `Φ(0) = I`, alongside the orbit with the same
/// RK4 steps as the orbit's time grid (the base trajectory is re-integrated
/// from its initial state).
pub fn linearized_flow<L: Lagrangian + ?Sized>(l: &L, orbit: &OrbitSample) -> Result<Monodromy> {
    let mono = linearized_flow_partial(l, orbit)?;
    match mono.overflow_time {
        Some(t) => Err(Error::Overflow { time: t }),
        None => Ok(mono),
    }
}

/// As [`linearized_flow`], but an overflow truncates the data instead of
/// failing.
pub fn linearized_flow_partial<L: Lagrangian + ?Sized>(l: &L, orbit: &OrbitSample) -> Result<Monodromy> {
    let d = orbit.dim;
    if orbit.is_empty() {
        return Err(Error::invalid("empty orbit"));
    }
    let mut state: Vec<f64> = orbit.position(0).iter().chain(orbit.velocity(0)).copied().collect();
    let mut phi = DMatrix::identity(2 * d, 2 * d);
    let det0 = lvv_det(l, &state);
    let mut out = Monodromy {
        dim: d,
        times: vec![orbit.times[0]],
        states: vec![state.clone()],
        matrices: vec![phi.clone()],
        det_drift: 0.0,
        overflow_time: None,
    };
    for w in orbit.times.windows(2) {
        let h = w[1] - w[0];
        let next = step(l, &state, &phi, h);
        let ok = matches!(&next, Ok((s, p)) if s.iter().all(|x| x.is_finite()) && p.iter().all(|x| x.is_finite()));
        if !ok {
            out.overflow_time = Some(w[0]);
            break;
        }
        let (s, p) = next?;
        state = s;
        phi = p;
        let drift = (phi.determinant() * lvv_det(l, &state) / det0 - 1.0).abs();
        out.det_drift = out.det_drift.max(drift);
        out.times.push(w[1]);
        out.states.push(state.clone());
        out.matrices.push(phi.clone());
    }
    Ok(out)
}

/// Conjugate times found along one orbit.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugateReport {
    pub times: Vec<f64>,
    /// Number of singular values of the vertical-to-horizontal block below
    /// the rank threshold at each time.
    pub multiplicities: Vec<usize>,
    pub interval: (f64, f64),
}

/// Relative singular-value threshold for a rank drop.
pub const RANK_TOL: f64 = 1e-7;
/// Time tolerance of located conjugate times.
pub const TIME_TOL: f64 = 1e-8;
/// Relative spacing below which two located times are the same zero.
const MERGE_TOL: f64 = 1e-6;

fn block_at<L: Lagrangian + ?Sized>(l: &L, mono: &Monodromy, i: usize, t: f64) -> Result<DMatrix<f64>> {
    let d = mono.dim;
    let h = t - mono.times[i];
    if h == 0.0 {
        return Ok(mono.vertical_to_horizontal(i));
    }
    let (_, phi) = step(l, &mono.states[i], &mono.matrices[i], h)?;
    Ok(phi.view((0, d), (d, d)).into_owned())
}

fn det_scaled(m: &DMatrix<f64>) -> f64 {
    m.determinant()
}

fn sigma_ratio(m: &DMatrix<f64>) -> (f64, f64) {
    let sv = m.singular_values();
    (sv.min(), sv.max())
}

fn multiplicity(m: &DMatrix<f64>, scale: f64) -> usize {
    let sv = m.singular_values();
    let tol = RANK_TOL.max(1e-6) * scale.max(sv.max());
    sv.iter().filter(|s| **s <= tol).count().max(1)
}

/// Locates zeros of `D(t) = det ∂x(t)/∂v(0)` for `t > 0`: sign changes are
/// bisected to [`TIME_TOL`]; touching zeros (even multiplicity, no sign
/// change) are found by minimizing the smallest singular value near local
/// minima of `|D|` and accepted when the rank gap is certified.
pub fn conjugate_scan<L: Lagrangian + ?Sized>(l: &L, mono: &Monodromy) -> Result<ConjugateReport> {
    let n = mono.times.len();
    let interval = (mono.times[0], *mono.times.last().expect("non-empty"));
    let mut report = ConjugateReport {
        times: Vec::new(),
        multiplicities: Vec::new(),
        interval,
    };
    if n < 3 {
        return Ok(report);
    }
    let blocks: Vec<DMatrix<f64>> = (0..n).map(|i| mono.vertical_to_horizontal(i)).collect();
    let dets: Vec<f64> = blocks.iter().map(det_scaled).collect();
    let scales: Vec<f64> = blocks.iter().map(|b| sigma_ratio(b).1).collect();
    let d = mono.dim as i32;
    // |D| relative to the size of the block
    let rel: Vec<f64> = dets.iter().zip(&scales).map(|(x, s)| x.abs() / s.powi(d).max(f64::MIN_POSITIVE)).collect();
    // skip the trivial zero at t = 0
    let mut start = 1;
    while start < n && rel[start] < 1e-3 && mono.times[start] - mono.times[0] < 1e-2 * (interval.1 - interval.0) {
        start += 1;
    }
    let mut i = start;
    while i + 1 < n {
        let (t0, t1) = (mono.times[i], mono.times[i + 1]);
        if dets[i] == 0.0 || dets[i] * dets[i + 1] < 0.0 {
            let (mut a, mut b) = (t0, t1);
            let fa = dets[i];
            if fa != 0.0 {
                while b - a > TIME_TOL {
                    let m = 0.5 * (a + b);
                    let fm = det_scaled(&block_at(l, mono, i, m)?);
                    if fm == 0.0 {
                        a = m;
                        b = m;
                    } else if fm * fa < 0.0 {
                        b = m;
                    } else {
                        a = m;
                    }
                }
            }
            let t = 0.5 * (a + b);
            let blk = block_at(l, mono, i, t)?;
            report.times.push(t);
            report.multiplicities.push(multiplicity(&blk, scales[i]));
            i += 1;
            continue;
        }
        // touching zero: local minimum of the relative determinant
        if i > start && rel[i] <= rel[i - 1] && rel[i] <= rel[i + 1] && rel[i] < 1e-2 {
            let (mut a, mut b) = (mono.times[i - 1], t1);
            let g = 0.5 * (5f64.sqrt() - 1.0);
            let f = |t: f64| -> Result<f64> {
                let j = if t >= mono.times[i] { i } else { i - 1 };
                let (lo, hi) = sigma_ratio(&block_at(l, mono, j, t)?);
                Ok(lo / hi)
            };
            let (mut c, mut e) = (b - g * (b - a), a + g * (b - a));
            let (mut fc, mut fe) = (f(c)?, f(e)?);
            while b - a > TIME_TOL {
                if fc < fe {
                    b = e;
                    e = c;
                    fe = fc;
                    c = b - g * (b - a);
                    fc = f(c)?;
                } else {
                    a = c;
                    c = e;
                    fc = fe;
                    e = a + g * (b - a);
                    fe = f(e)?;
                }
            }
            let t = 0.5 * (a + b);
            if f(t)? <= 1e-5 {
                let j = if t >= mono.times[i] { i } else { i - 1 };
                report.times.push(t);
                report.multiplicities.push(multiplicity(&block_at(l, mono, j, t)?, scales[i]));
            }
        }
        i += 1;
    }
    // a zero near a grid point can be caught by both tests
    let mut order: Vec<usize> = (0..report.times.len()).collect();
    order.sort_by(|a, b| report.times[*a].total_cmp(&report.times[*b]));
    let (mut times, mut mults): (Vec<f64>, Vec<usize>) = (Vec::new(), Vec::new());
    for j in order {
        let t = report.times[j];
        if times.last().is_some_and(|p: &f64| t - p <= MERGE_TOL * (interval.1 - interval.0).max(1.0)) {
            let last = mults.len() - 1;
            mults[last] = mults[last].max(report.multiplicities[j]);
            continue;
        }
        times.push(t);
        mults.push(report.multiplicities[j]);
    }
    report.times = times;
    report.multiplicities = mults;
    Ok(report)
}
