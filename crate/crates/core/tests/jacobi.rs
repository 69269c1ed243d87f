mod common;

use common::{random_closed, random_tangent, rng, systems};
use freetime::flow::{descend, integrate_el, refine_critical, DescentOptions, RefineOptions};
use freetime::jacobi::{conjugate_scan, hessian_spectrum, jacobi_bound_check, linearized_flow};
use freetime::loopspace::{action, d_action, hessian_dense, node_velocities};
use freetime::minimax::{mountain_pass, SweepOptions};
use freetime::{FourierField, FreeTimeLoop, MetricWeights, TonelliLagrangian, TorusManifold};
use nalgebra::DVector;

fn flow_end(l: &TonelliLagrangian, x: &[f64], v: &[f64], t: f64, dt: f64) -> Vec<f64> {
    let o = integrate_el(l, x, v, t, dt).unwrap();
    o.last_position().iter().chain(o.last_velocity()).copied().collect()
}

#[test]
fn monodromy_matches_finite_differences() {
    for (name, l) in systems() {
        let (x0, v0) = ([0.12, 0.31], [0.5, -0.3]);
        let (t, dt) = (1.5, 1e-3);
        let o = integrate_el(&l, &x0, &v0, t, dt).unwrap();
        let m = linearized_flow(&l, &o).unwrap();
        let phi = m.matrices.last().unwrap();
        let h = 1e-6;
        for col in 0..4 {
            let mut s: Vec<f64> = x0.iter().chain(&v0).copied().collect();
            s[col] += h;
            let plus = flow_end(&l, &s[..2], &s[2..], t, dt);
            s[col] -= 2.0 * h;
            let minus = flow_end(&l, &s[..2], &s[2..], t, dt);
            let fd: Vec<f64> = plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * h)).collect();
            let an: Vec<f64> = (0..4).map(|r| phi[(r, col)]).collect();
            let err = fd.iter().zip(&an).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale = an.iter().map(|a| a * a).sum::<f64>().sqrt().max(1.0);
            assert!(err <= 1e-4 * scale, "{name} column {col}: {err}");
        }
    }
}

#[test]
fn zero_span_gives_identity() {
    let l = TonelliLagrangian::magnetic(2.0);
    let o = integrate_el(&l, &[0.1, 0.2], &[0.3, 0.4], 0.0, 1e-3).unwrap();
    let m = linearized_flow(&l, &o).unwrap();
    assert_eq!(m.matrices[0], nalgebra::DMatrix::identity(4, 4));
}

#[test]
fn flat_jacobi_fields_grow_linearly() {
    let l = TonelliLagrangian::free(2).unwrap();
    let o = integrate_el(&l, &[0.0, 0.0], &[1.0, 0.3], 7.0, 0.01).unwrap();
    let m = linearized_flow(&l, &o).unwrap();
    for (i, t) in m.times.iter().enumerate().step_by(50) {
        let b = m.vertical_to_horizontal(i);
        assert!((b - nalgebra::DMatrix::<f64>::identity(2, 2) * *t).abs().max() < 1e-10);
    }
}

#[test]
fn flat_geodesics_have_no_conjugate_points() {
    let l = TonelliLagrangian::free(2).unwrap();
    let o = integrate_el(&l, &[0.0, 0.0], &[1.0, 0.3], 100.0, 0.05).unwrap();
    let m = linearized_flow(&l, &o).unwrap();
    assert!(conjugate_scan(&l, &m).unwrap().times.is_empty());
}

#[test]
fn strong_field_orbit_has_a_conjugate_time_within_one_period() {
    // near x₁ = 0 the field is close to its maximum 4π, and a slow orbit is
    // a small near-circle of period 2π/4π = ½. All circles through the
    // start refocus after one revolution: ∂x/∂v(0) vanishes there.
    let l = TonelliLagrangian::magnetic(2.0);
    let (x0, speed) = ([0.0, 0.0], 0.02);
    let o = integrate_el(&l, &x0, &[0.0, speed], 0.6, 1e-4).unwrap();
    let m = linearized_flow(&l, &o).unwrap();
    let r = conjugate_scan(&l, &m).unwrap();
    let first = *r.times.first().expect("a conjugate time");
    assert!((first - 0.5).abs() < 0.02, "{first}");
    // finite-difference oracle for ∂x(t)/∂v(0)
    let block = |t: f64| {
        let h = 1e-7;
        let mut out = nalgebra::DMatrix::zeros(2, 2);
        for c in 0..2 {
            let mut vp = [0.0, speed];
            vp[c] += h;
            let mut vm = [0.0, speed];
            vm[c] -= h;
            let p = flow_end(&l, &x0, &vp, t, 1e-5);
            let q = flow_end(&l, &x0, &vm, t, 1e-5);
            for row in 0..2 {
                out[(row, c)] = (p[row] - q[row]) / (2.0 * h);
            }
        }
        out
    };
    let at_root = block(first).singular_values().min();
    let half_turn = block(0.25).singular_values().max();
    assert!(at_root <= 1e-3 * half_turn, "{at_root} vs {half_turn}");
}

#[test]
fn mountain_pass_orbit_has_conjugate_points_and_a_soft_direction() {
    let l = TonelliLagrangian::magnetic(2.0);
    let r = mountain_pass(&l, 0.3, &SweepOptions::default()).unwrap();
    assert!(r.verified);
    let orb = r.orbit.unwrap();
    assert!(r.bottom_eigenvalue.unwrap() <= 1e-6);
    let t = orb.period();
    let v = node_velocities(&orb);
    let o = integrate_el(&l, orb.node(0), &v[..2], 3.0 * t, t / 2000.0).unwrap();
    let m = linearized_flow(&l, &o).unwrap();
    let c = conjugate_scan(&l, &m).unwrap();
    assert!(!c.times.is_empty());
    assert!(c.times.iter().all(|s| *s > c.interval.0 && *s <= c.interval.1));
}

#[test]
fn class_minimizing_geodesic_is_a_strict_minimizer() {
    let l = TonelliLagrangian::free(2).unwrap();
    let start = FreeTimeLoop::straight(&[0.0, 0.0], &[1, 0], 1.0, 64).unwrap();
    let s = descend(&l, 0.5, &start, &DescentOptions::default()).unwrap();
    let (lp, _) = refine_critical(&l, 0.5, &s.loop_, &RefineOptions::default()).unwrap();
    assert!((lp.period() - 1.0).abs() < 1e-8);
    let spec = hessian_spectrum(&l, 0.5, &lp, 6, MetricWeights::Completing).unwrap();
    assert!(spec.bottom() >= -1e-8, "{:?}", spec.eigenvalues);
    // the translation of the parameter origin is the null direction
    let rep = spec.reparam.expect("reparametrization mode");
    assert!(spec.eigenvalues[rep].abs() < 1e-6);
}

#[test]
fn hessian_vector_products_match_second_differences() {
    let mut r = rng(31);
    for (name, l) in systems() {
        let lp = random_closed(&mut r, &[1, 0], 32);
        let k = 0.3;
        let h = hessian_dense(&l, &lp).unwrap();
        let xi = random_tangent(&mut r, &lp);
        let z = DVector::from_vec(xi.to_free(&lp));
        let an = (&h * &z).dot(&z);
        let eps = 1e-4;
        let a0 = action(&l, &lp, k).unwrap();
        let ap = action(&l, &lp.displaced(&xi, eps).unwrap(), k).unwrap();
        let am = action(&l, &lp.displaced(&xi, -eps).unwrap(), k).unwrap();
        let fd = (ap - 2.0 * a0 + am) / (eps * eps);
        assert!((fd - an).abs() <= 1e-4 * an.abs().max(1.0), "{name}: {fd} vs {an}");
    }
}

#[test]
fn energy_shift_leaves_the_position_block_unchanged() {
    // 𝒜_{k+δ} = 𝒜ₖ + δT: differentiate the gradient at both energies
    let l = TonelliLagrangian::magnetic(2.0);
    let lp = FreeTimeLoop::circle(&[0.3, 0.5], 0.1, 1.0, 0.7, 32).unwrap();
    let fd_hessian = |k: f64| {
        let z0 = lp.to_free();
        let m = z0.len();
        let mut out = nalgebra::DMatrix::zeros(m, m);
        for j in 0..m {
            let h = 1e-6;
            let mut zp = z0.clone();
            zp[j] += h;
            let mut zm = z0.clone();
            zm[j] -= h;
            let gp = d_action(&l, &lp.from_free(&zp).unwrap(), k).unwrap().differential.to_free();
            let gm = d_action(&l, &lp.from_free(&zm).unwrap(), k).unwrap().differential.to_free();
            for i in 0..m {
                out[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        out
    };
    let (a, b) = (fd_hessian(0.1), fd_hessian(0.6));
    let m = a.nrows() - 1;
    let diff = (a.view((0, 0), (m, m)) - b.view((0, 0), (m, m))).abs().max();
    assert!(diff <= 1e-6 * a.abs().max(), "{diff}");
}

#[test]
fn jacobi_constant_on_flat_and_mildly_conformal_tori() {
    let (k, bad) = jacobi_bound_check(&TorusManifold::flat(2), 200, 1).unwrap();
    // J is linear: |J|, |J′| ≤ |J(0)| + |J(1)|, J″ = 0
    assert!(k <= 1.0 + 1e-9 && k > 0.5, "{k}");
    assert_eq!(bad, 0);
    let u = FourierField::zero().with_term(&[1, 0], 0.05, 0.0);
    let (k, bad) = jacobi_bound_check(&TorusManifold::conformal(2, u).unwrap(), 1000, 2).unwrap();
    // D²J = −R(γ̇, J)γ̇ with Gaussian curvature up to about 4π²·0.05
    assert!(k > 1.0 && k < 3.0, "{k}");
    assert!(bad <= 10, "{bad}");
}
