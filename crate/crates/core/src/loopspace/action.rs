//! Free-period action `𝒜ₖ(x,T) = ∫₀¹ T[L(x, x'/T) + k] ds` on quadratic
//! elements with Simpson quadrature.
//!
//! Nodes `2e, 2e+1, 2e+2` span element `e`; the interpolant is quadratic
//! there, so the velocity at each of the three quadrature points is an exact
//! three-point derivative. Critical points of this discrete action satisfy
//! the matching discrete Euler-Lagrange equations exactly.

use super::{EndpointMode, FreeTimeLoop, LoopCotangent};
use crate::error::{Error, Result};
use crate::linalg::BandedSym;
use crate::systems::{energy_from_jet, Jet, Lagrangian};
use nalgebra::DMatrix;

/// Unscaled three-point derivative weights at the element's local nodes.
const D: [[f64; 3]; 3] = [[-3.0, 4.0, -1.0], [-1.0, 0.0, 1.0], [1.0, -4.0, 3.0]];
/// Simpson weights relative to `h/6` where `h = 2/N` is the element length.
const W: [f64; 3] = [1.0, 4.0, 1.0];

fn check<L: Lagrangian + ?Sized>(l: &L, lp: &FreeTimeLoop) -> Result<()> {
    if lp.dim() != l.dim() {
        return Err(Error::invalid(format!(
            "loop dimension {} does not match system dimension {}",
            lp.dim(),
            l.dim()
        )));
    }
    if !(lp.period() > 0.0) {
        return Err(Error::invalid("period must be positive"));
    }
    Ok(())
}

/// Calls `visit(e, q, x_q, v_q, quadrature weight)` for every quadrature point.
fn for_each_point(lp: &FreeTimeLoop, mut visit: impl FnMut(usize, usize, &[f64], &[f64], f64)) {
    let n = lp.n();
    let d = lp.dim();
    let hs = 2.0 / n as f64;
    let t = lp.period();
    let mut v = vec![0.0; d];
    for e in 0..n / 2 {
        for q in 0..3 {
            for c in 0..d {
                v[c] = (0..3).map(|j| D[q][j] * lp.node(2 * e + j)[c]).sum::<f64>() / (hs * t);
            }
            visit(e, q, lp.node(2 * e + q), &v, hs / 6.0 * W[q]);
        }
    }
}

/// Value of `𝒜ₖ`.
pub fn action<L: Lagrangian + ?Sized>(l: &L, lp: &FreeTimeLoop, k: f64) -> Result<f64> {
    check(l, lp)?;
    let t = lp.period();
    let mut jet = Jet::new(l.dim());
    let mut sum = 0.0;
    for_each_point(lp, |_, _, x, v, w| {
        l.eval(x, v, false, &mut jet);
        sum += w * (jet.value + k);
    });
    let a = t * sum;
    if !a.is_finite() {
        return Err(Error::numeric("non-finite action"));
    }
    Ok(a)
}

/// Action together with its differential.
#[derive(Debug, Clone)]
pub struct ActionParts {
    pub value: f64,
    pub differential: LoopCotangent,
    /// `∫ E ds`, whose difference with `k` is the period component.
    pub mean_energy: f64,
}

/// Differential `d𝒜ₖ` as pairing coefficients over free coordinates.
///
/// The node part is `Σ W T L_x δ + W L_v ∂_s`, the period part is
/// `∫(k − E) ds`.
pub fn d_action<L: Lagrangian + ?Sized>(l: &L, lp: &FreeTimeLoop, k: f64) -> Result<ActionParts> {
    check(l, lp)?;
    let d = lp.dim();
    let n = lp.n();
    let hs = 2.0 / n as f64;
    let t = lp.period();
    let mut coef = vec![0.0; lp.free_nodes() * d];
    let mut jet = Jet::new(d);
    let mut sum = 0.0;
    let mut esum = 0.0;
    for_each_point(lp, |e, q, x, v, w| {
        l.eval(x, v, false, &mut jet);
        sum += w * (jet.value + k);
        esum += w * energy_from_jet(&jet, v);
        for j in 0..3 {
            let Some(slot) = lp.free_slot(2 * e + j) else { continue };
            let dq = D[q][j] / hs;
            for c in 0..d {
                let mut g = w * dq * jet.lv[c];
                if j == q {
                    g += w * t * jet.lx[c];
                }
                coef[slot * d + c] += g;
            }
        }
    });
    let value = t * sum;
    let differential = LoopCotangent {
        nodes: coef,
        period: k - esum,
    };
    if !value.is_finite() || !differential.max_abs().is_finite() {
        return Err(Error::numeric("non-finite action differential"));
    }
    Ok(ActionParts {
        value,
        differential,
        mean_energy: esum,
    })
}

/// Index used by [`hessian_point`] for the period row/column.
const PERIOD: usize = 3;

/// Local second derivatives at one quadrature point, passed to
/// `add(i, a, j, b, value)` with local node indices `i, j < 3` (or
/// [`PERIOD`]) and coordinate indices `a, b`. Mixed period terms are
/// emitted once as `(i, a, PERIOD, 0)`.
fn hessian_point(jet: &Jet, v: &[f64], q: usize, w: f64, t: f64, hs: f64, mut add: impl FnMut(usize, usize, usize, usize, f64)) {
    let d = v.len();
    let beta = |i: usize| D[q][i] / (hs * t);
    for i in 0..3 {
        let di = if i == q { 1.0 } else { 0.0 };
        let bi = beta(i);
        for j in 0..3 {
            let dj = if j == q { 1.0 } else { 0.0 };
            let bj = beta(j);
            for a in 0..d {
                for b in 0..d {
                    let val = di * dj * jet.lxx[a * d + b]
                        + di * bj * jet.lxv[a * d + b]
                        + bi * dj * jet.lxv[b * d + a]
                        + bi * bj * jet.lvv[a * d + b];
                    if val != 0.0 {
                        add(i, a, j, b, w * t * val);
                    }
                }
            }
        }
        for a in 0..d {
            let mut mixed = 0.0;
            for b in 0..d {
                mixed -= (di * jet.lxv[a * d + b] + bi * jet.lvv[a * d + b]) * v[b];
            }
            if di != 0.0 {
                mixed += jet.lx[a];
            }
            add(i, a, PERIOD, 0, w * mixed);
        }
    }
    let mut vlv = 0.0;
    for a in 0..d {
        for b in 0..d {
            vlv += v[a] * jet.lvv[a * d + b] * v[b];
        }
    }
    add(PERIOD, 0, PERIOD, 0, w * vlv / t);
}

/// Dense Hessian of `𝒜ₖ` over the free coordinates (period last). It does
/// not depend on `k` since `𝒜_{k+δ} = 𝒜ₖ + δT`.
pub fn hessian_dense<L: Lagrangian + ?Sized>(l: &L, lp: &FreeTimeLoop) -> Result<DMatrix<f64>> {
    check(l, lp)?;
    let d = lp.dim();
    let hs = 2.0 / lp.n() as f64;
    let t = lp.period();
    let m = lp.free_len();
    let tcol = m - 1;
    let mut h = DMatrix::<f64>::zeros(m, m);
    let mut jet = Jet::new(d);
    for_each_point(lp, |e, q, x, v, w| {
        l.eval(x, v, true, &mut jet);
        let index = |i: usize, a: usize| -> Option<usize> {
            if i == PERIOD {
                Some(tcol)
            } else {
                lp.free_slot(2 * e + i).map(|s| s * d + a)
            }
        };
        hessian_point(&jet, v, q, w, t, hs, |i, a, j, b, val| {
            if let (Some(r), Some(c)) = (index(i, a), index(j, b)) {
                h[(r, c)] += val;
                if j == PERIOD && i != PERIOD {
                    h[(c, r)] += val;
                }
            }
        });
    });
    if h.iter().any(|x| !x.is_finite()) {
        return Err(Error::numeric("non-finite Hessian"));
    }
    Ok(h)
}

/// Node-node block of the Hessian in banded storage, for fixed-endpoint
/// loops (the closed case couples node 0 with node N−1).
pub fn hessian_x_banded<L: Lagrangian + ?Sized>(l: &L, lp: &FreeTimeLoop) -> Result<BandedSym> {
    check(l, lp)?;
    if lp.mode() != EndpointMode::Fixed {
        return Err(Error::invalid("banded Hessian requires fixed endpoints"));
    }
    let d = lp.dim();
    let hs = 2.0 / lp.n() as f64;
    let t = lp.period();
    let m = lp.free_nodes() * d;
    let mut h = BandedSym::zeros(m, 3 * d - 1);
    let mut jet = Jet::new(d);
    for_each_point(lp, |e, q, x, v, w| {
        l.eval(x, v, true, &mut jet);
        hessian_point(&jet, v, q, w, t, hs, |i, a, j, b, val| {
            if i == PERIOD || j == PERIOD {
                return;
            }
            if let (Some(si), Some(sj)) = (lp.free_slot(2 * e + i), lp.free_slot(2 * e + j)) {
                let (r, c) = (si * d + a, sj * d + b);
                if r >= c {
                    h.add(r, c, val);
                }
            }
        });
    });
    Ok(h)
}

/// Energies at the quadrature points, element by element.
pub fn quadrature_energies<L: Lagrangian + ?Sized>(l: &L, lp: &FreeTimeLoop) -> Result<Vec<f64>> {
    check(l, lp)?;
    let mut jet = Jet::new(l.dim());
    let mut out = Vec::with_capacity(3 * lp.n() / 2);
    for_each_point(lp, |_, _, x, v, _| {
        l.eval(x, v, false, &mut jet);
        out.push(energy_from_jet(&jet, v));
    });
    Ok(out)
}

/// `∫₀¹ E(x, x'/T) ds` under the quadrature.
pub fn mean_energy<L: Lagrangian + ?Sized>(l: &L, lp: &FreeTimeLoop) -> Result<f64> {
    check(l, lp)?;
    let mut jet = Jet::new(l.dim());
    let mut sum = 0.0;
    for_each_point(lp, |_, _, x, v, w| {
        l.eval(x, v, false, &mut jet);
        sum += w * energy_from_jet(&jet, v);
    });
    Ok(sum)
}

const CENTRAL6: [f64; 3] = [3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0];

/// Node velocities `x'(s_i)/T`: sixth-order central differences where the
/// stencil fits (everywhere for closed loops), element derivatives near
/// pinned ends.
pub fn node_velocities(lp: &FreeTimeLoop) -> Vec<f64> {
    let n = lp.n();
    let d = lp.dim();
    let t = lp.period();
    let closed = lp.mode() == EndpointMode::Closed;
    let w = lp.winding();
    // lifted node with periodic extension
    let at = |i: isize, c: usize| -> f64 {
        let nn = n as isize;
        let r = i.rem_euclid(nn);
        let shift = (i - r) / nn;
        lp.node(r as usize)[c] + shift as f64 * w[c] as f64
    };
    let mut out = vec![0.0; (n + 1) * d];
    for i in 0..=n {
        let interior = closed || (i >= 3 && i + 3 <= n);
        for c in 0..d {
            let der = if interior {
                let ii = i as isize;
                CENTRAL6
                    .iter()
                    .enumerate()
                    .map(|(m, a)| a * (at(ii + m as isize + 1, c) - at(ii - m as isize - 1, c)))
                    .sum::<f64>()
                    * n as f64
            } else {
                let hs = 2.0 / n as f64;
                let e = (i / 2).min(n / 2 - 1);
                let q = i - 2 * e;
                (0..3).map(|j| D[q][j] * lp.node(2 * e + j)[c]).sum::<f64>() / hs
            };
            out[i * d + c] = der / t;
        }
    }
    out
}

/// Pointwise energies `E(x_i, x'(s_i)/T)` at every node.
pub fn vertex_energies<L: Lagrangian + ?Sized>(l: &L, lp: &FreeTimeLoop) -> Result<Vec<f64>> {
    check(l, lp)?;
    let d = lp.dim();
    let vel = node_velocities(lp);
    let mut jet = Jet::new(d);
    Ok((0..=lp.n())
        .map(|i| {
            let v = &vel[i * d..(i + 1) * d];
            l.eval(lp.node(i), v, false, &mut jet);
            energy_from_jet(&jet, v)
        })
        .collect())
}

/// Largest discrete Euler-Lagrange residual `|c_i| / (ω_i T)` over free
/// nodes, where `c` is the node part of `d𝒜ₖ` and `ω_i` the lumped
/// quadrature weight of node `i`; this approximates `|L_x − (d/dt) L_v|`.
pub fn el_residual<L: Lagrangian + ?Sized>(l: &L, lp: &FreeTimeLoop, k: f64) -> Result<f64> {
    let parts = d_action(l, lp, k)?;
    let d = lp.dim();
    let n = lp.n();
    let hs = 2.0 / n as f64;
    let t = lp.period();
    let mut worst: f64 = 0.0;
    for slot in 0..lp.free_nodes() {
        let i = slot + lp.first_free();
        let omega = if i % 2 == 1 { 4.0 * hs / 6.0 } else { 2.0 * hs / 6.0 };
        for c in 0..d {
            worst = worst.max(parts.differential.nodes[slot * d + c].abs() / (omega * t));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loopspace::LoopTangent;
    use crate::systems::TonelliLagrangian;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_loop_action() {
        let l = TonelliLagrangian::mechanical_cos();
        let lp = FreeTimeLoop::constant(&[0.0, 0.0], 3.0, 16).unwrap();
        assert!((action(&l, &lp, 2.0).unwrap() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn straight_free_loop_action() {
        let l = TonelliLagrangian::free(2).unwrap();
        let lp = FreeTimeLoop::straight(&[0.0, 0.0], &[1, 0], 2.0, 16).unwrap();
        assert!((action(&l, &lp, 0.0).unwrap() - 0.25).abs() < 1e-14);
    }

    #[test]
    fn constant_loop_differential() {
        let l = TonelliLagrangian::mechanical_cos();
        let q = [0.1, 0.3];
        let (k, t) = (2.0, 1.5);
        let lp = FreeTimeLoop::constant(&q, t, 16).unwrap();
        let p = d_action(&l, &lp, k).unwrap();
        let v0 = (std::f64::consts::TAU * q[0]).cos();
        assert!((p.differential.period - (k - v0)).abs() < 1e-14);
        // vertex nodes carry weight 2h/6, midpoints 4h/6
        let dv = -std::f64::consts::TAU * (std::f64::consts::TAU * q[0]).sin();
        let hs = 2.0 / 16.0;
        assert!((p.differential.nodes[0] - (-t * dv * hs / 3.0)).abs() < 1e-13);
        assert!((p.differential.nodes[2] - (-t * dv * 2.0 * hs / 3.0)).abs() < 1e-13);
    }

    fn random_loop(rng: &mut ChaCha8Rng, mode: EndpointMode) -> FreeTimeLoop {
        let n = 16;
        let t = rng.random_range(0.3..2.0);
        let base = match mode {
            EndpointMode::Closed => FreeTimeLoop::circle(&[0.3, 0.4], 0.2, 1.0, t, n).unwrap(),
            EndpointMode::Fixed => FreeTimeLoop::segment(&[0.1, 0.2], &[0.9, 0.6], t, n).unwrap(),
        };
        let z: Vec<f64> = base
            .to_free()
            .iter()
            .enumerate()
            .map(|(i, x)| if i + 1 == base.free_len() { *x } else { x + rng.random_range(-0.05..0.05) })
            .collect();
        base.from_free(&z).unwrap()
    }

    #[test]
    fn differential_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let systems = [
            TonelliLagrangian::mechanical_cos(),
            TonelliLagrangian::magnetic(2.0),
            TonelliLagrangian::reeb(),
        ];
        for l in &systems {
            for mode in [EndpointMode::Closed, EndpointMode::Fixed] {
                let lp = random_loop(&mut rng, mode);
                let k = 0.3;
                let p = d_action(l, &lp, k).unwrap();
                let z: Vec<f64> = (0..lp.free_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let tan = LoopTangent::from_free(&lp, &z);
                let h = 1e-6;
                let plus = action(l, &lp.displaced(&tan, h).unwrap(), k).unwrap();
                let minus = action(l, &lp.displaced(&tan, -h).unwrap(), k).unwrap();
                let fd = (plus - minus) / (2.0 * h);
                let an = p.differential.pair(&lp, &tan);
                assert!((fd - an).abs() <= 1e-6 * (1.0 + an.abs()), "{fd} vs {an}");
            }
        }
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let systems = [TonelliLagrangian::magnetic(2.0), TonelliLagrangian::reeb()];
        for l in &systems {
            for mode in [EndpointMode::Closed, EndpointMode::Fixed] {
                let lp = random_loop(&mut rng, mode);
                let k = -0.2;
                let h = hessian_dense(l, &lp).unwrap();
                assert!((&h - h.transpose()).amax() < 1e-10);
                let z: Vec<f64> = (0..lp.free_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let tan = LoopTangent::from_free(&lp, &z);
                let eps = 1e-6;
                let gp = d_action(l, &lp.displaced(&tan, eps).unwrap(), k).unwrap().differential.to_free();
                let gm = d_action(l, &lp.displaced(&tan, -eps).unwrap(), k).unwrap().differential.to_free();
                let hz = &h * nalgebra::DVector::from_vec(z.clone());
                for i in 0..z.len() {
                    let fd = (gp[i] - gm[i]) / (2.0 * eps);
                    assert!((fd - hz[i]).abs() < 1e-6 * (1.0 + hz.amax()), "row {i}: {fd} vs {}", hz[i]);
                }
                if mode == EndpointMode::Fixed {
                    let b = hessian_x_banded(l, &lp).unwrap();
                    let m = b.n();
                    for r in 0..m {
                        for c in 0..m {
                            assert!((b.get(r, c) - h[(r, c)]).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn geodesic_energy_and_residual() {
        let l = TonelliLagrangian::free(2).unwrap();
        let lp = FreeTimeLoop::straight(&[0.2, 0.1], &[1, 0], 1.0, 32).unwrap();
        for e in vertex_energies(&l, &lp).unwrap() {
            assert!((e - 0.5).abs() < 1e-13);
        }
        assert!(el_residual(&l, &lp, 0.5).unwrap() < 1e-12);
        assert!((mean_energy(&l, &lp).unwrap() - 0.5).abs() < 1e-14);
    }
}
