mod common;

use common::{random_closed, rng, systems};
use freetime::critvals::rectangle_path;
use freetime::flow::{
    blowup_diagnosis, descend, diagnose_ps, empirical_measure, integrate_el, minimize_fixed_period, refine_critical,
    DescentOptions, FixedPeriodOptions, PsDiagnosis, RefineOptions, Termination,
};
use freetime::loopspace::{node_velocities, vertex_energies};
use freetime::{FreeTimeLoop, TonelliLagrangian};

fn class_orbit(l: &TonelliLagrangian, k: f64, n: usize) -> FreeTimeLoop {
    let start = FreeTimeLoop::straight(&[0.0, 0.0], &[1, 0], 0.5, n).unwrap();
    let opts = DescentOptions {
        gtol: 1e-6,
        ..Default::default()
    };
    let s = descend(l, k, &start, &opts).unwrap();
    assert_eq!(s.termination, Termination::Converged);
    refine_critical(l, k, &s.loop_, &RefineOptions::default()).unwrap().0
}

#[test]
fn mechanical_class_orbit_has_pointwise_energy() {
    let l = TonelliLagrangian::mechanical_cos();
    let lp = class_orbit(&l, 2.0, 256);
    let e = vertex_energies(&l, &lp).unwrap();
    assert!(e.iter().all(|e| (e - 2.0).abs() <= 1e-6));
    // independent check: integrate the EL flow for one period from node 0
    let v = node_velocities(&lp);
    let t = lp.period();
    let o = integrate_el(&l, lp.node(0), &v[..2], t, t / 8192.0).unwrap();
    let end = o.last_position();
    assert!((end[0] - lp.node(0)[0] - 1.0).abs() < 1e-5);
    assert!((end[1] - lp.node(0)[1]).abs() < 1e-5);
}

#[test]
fn perturbed_orbit_is_recovered() {
    let l = TonelliLagrangian::mechanical_cos();
    let lp = class_orbit(&l, 2.0, 128);
    let mut r = rng(8);
    let noisy = {
        use rand::Rng;
        let z: Vec<f64> = lp.to_free().iter().map(|x| x + r.random_range(-1e-3..1e-3)).collect();
        lp.from_free(&z).unwrap()
    };
    let (back, res) = refine_critical(&l, 2.0, &noisy, &RefineOptions::default()).unwrap();
    assert!(res.el_residual <= 1e-9);
    assert!((back.period() - lp.period()).abs() < 1e-8);
    // unique up to time shift and translation in x₂; the x₂ oscillation
    // span and the speed range are invariants of the orbit
    let span = |p: &FreeTimeLoop| {
        let x2: Vec<f64> = (0..=p.n()).map(|i| p.node(i)[1]).collect();
        x2.iter().cloned().fold(f64::MIN, f64::max) - x2.iter().cloned().fold(f64::MAX, f64::min)
    };
    assert!((span(&back) - span(&lp)).abs() < 1e-6, "{} vs {}", span(&back), span(&lp));
    let e = vertex_energies(&l, &back).unwrap();
    assert!(e.iter().all(|e| (e - 2.0).abs() <= 1e-6));
}

#[test]
fn energy_drift_is_small() {
    for (name, l) in systems() {
        let o = integrate_el(&l, &[0.1, 0.3], &[0.4, -0.2], 100.0, 1e-3).unwrap();
        assert!(o.energy_drift <= 1e-8, "{name}: drift {}", o.energy_drift);
    }
}

#[test]
fn descent_is_monotone_on_random_loops() {
    let mut r = rng(21);
    for (name, l) in systems() {
        let start = random_closed(&mut r, &[1, 0], 64);
        let opts = DescentOptions {
            max_iter: 300,
            ..Default::default()
        };
        let s = descend(&l, 0.7, &start, &opts).unwrap();
        assert!(s.action_history.windows(2).all(|w| w[1] <= w[0]), "{name}");
        assert!(s.period_history.iter().all(|t| *t > 0.0));
        assert!(s.descent_ratio <= 2.0 * (1.0 + 1e-9), "{name}: {}", s.descent_ratio);
    }
}

#[test]
fn collapse_near_the_maximum_of_the_potential() {
    // k = max V: a constant loop close to x₁ = 0 at small period is a
    // Palais-Smale sequence shrinking onto the rest point at the maximum
    let l = TonelliLagrangian::mechanical_cos();
    let start = FreeTimeLoop::constant(&[0.005, 0.3], 1.5e-3, 16).unwrap();
    let s = descend(&l, 1.0, &start, &DescentOptions::default()).unwrap();
    assert_eq!(s.termination, Termination::TCollapse);
    match diagnose_ps(&l, 1.0, &s).unwrap() {
        PsDiagnosis::TCollapse { q0, energy_gap, .. } => {
            assert!(energy_gap <= 1e-3, "{energy_gap}");
            assert!(q0[0].min(1.0 - q0[0]) < 0.01);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn converged_runs_have_empty_diagnosis() {
    let l = TonelliLagrangian::free(2).unwrap();
    let start = FreeTimeLoop::straight(&[0.0, 0.0], &[1, 0], 1.0, 16).unwrap();
    let s = descend(&l, 0.5, &start, &DescentOptions::default()).unwrap();
    assert_eq!(diagnose_ps(&l, 0.5, &s).unwrap(), PsDiagnosis::Converged);
}

#[test]
fn long_reeb_loops_carry_an_invariant_measure() {
    // minimizer at a long fixed period of a contractible loop through the
    // origin: it follows both closed leaves, x₁ = 0 up and x₁ = ½ down
    let l = TonelliLagrangian::reeb();
    let t = 50.0;
    let start = rectangle_path(&[0.0, 0.0], &[0.0, 0.0], 0.5 * (t - 1.0), 0.5, t, 1000).unwrap();
    let r = minimize_fixed_period(&l, 0.0, &start, &FixedPeriodOptions::default()).unwrap();
    assert!(r.converged);
    match blowup_diagnosis(&l, 0.0, &r.loop_).unwrap() {
        PsDiagnosis::TBlowup { summary, mean_velocity_norm, energy_gap } => {
            // T = 50 is still short; the pinned 1e-2 applies at T = 200
            assert!(summary.action_per_time.abs() <= 2e-2, "{}", summary.action_per_time);
            assert!(mean_velocity_norm <= 0.05);
            assert!(energy_gap <= 1e-3);
        }
        other => panic!("{other:?}"),
    }
    let m = empirical_measure(&l, 0.0, &r.loop_, 10).unwrap();
    assert!((m.total_mass() - 1.0).abs() <= 1e-12);
    let tube = |c: f64| {
        m.mass_where(|x| {
            let d = (x[0] - c).rem_euclid(1.0);
            d.min(1.0 - d) <= 0.05
        })
    };
    assert!(tube(0.0) + tube(0.5) >= 0.8);
    assert!((tube(0.0) - 0.5).abs() <= 0.1 && (tube(0.5) - 0.5).abs() <= 0.1);
}

#[test]
fn measure_marginal_sums_to_one() {
    let l = TonelliLagrangian::magnetic(2.0);
    let lp = FreeTimeLoop::circle(&[0.3, 0.6], 0.2, 1.0, 0.8, 64).unwrap();
    let m = empirical_measure(&l, 0.1, &lp, 8).unwrap();
    let marginal: f64 = m.position_marginal().iter().sum();
    assert!((marginal - 1.0).abs() <= 1e-12);
    assert!(m.summary.mean_velocity.iter().all(|v| v.abs() < 1e-14));
}
