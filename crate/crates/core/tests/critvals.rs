use freetime::critvals::{
    c0_estimate_with, critical_values, cu_lower, default_form_grid, e0_exact, mane_c_lower, peierls_phi, peierls_scan,
    ratio, AscentOptions, PeierlsOptions,
};
use freetime::TonelliLagrangian;

#[test]
fn e0_of_the_built_in_systems() {
    assert_eq!(e0_exact(&TonelliLagrangian::mechanical_cos(), 128).unwrap(), 1.0);
    assert_eq!(e0_exact(&TonelliLagrangian::free(2).unwrap(), 64).unwrap(), 0.0);
    assert!((e0_exact(&TonelliLagrangian::reeb(), 64).unwrap() + 0.5).abs() < 1e-14);
    assert!(e0_exact(&TonelliLagrangian::free(2).unwrap(), 32).is_err());
}

#[test]
fn mechanical_critical_value_is_e0() {
    let l = TonelliLagrangian::mechanical_cos();
    let c = mane_c_lower(&l, 4).unwrap();
    assert!((c.value - 1.0).abs() <= 1e-2, "{}", c.value);
    assert!((ratio(&l, &c.witness).unwrap() - c.value).abs() <= 1e-10);
    let cu = cu_lower(&l, 4).unwrap();
    assert!(cu.value.max(1.0) == 1.0 || (cu.value - 1.0).abs() <= 1e-2);
}

#[test]
fn free_particle_values_vanish() {
    let l = TonelliLagrangian::free(2).unwrap();
    assert_eq!(mane_c_lower(&l, 2).unwrap().value, 0.0);
    assert_eq!(cu_lower(&l, 2).unwrap().value, 0.0);
    let c0 = c0_estimate_with(&l, &default_form_grid(2), &AscentOptions::default(), &[], None).unwrap();
    assert_eq!(c0.value, 0.0);
    assert_eq!(c0.form, vec![0.0, 0.0]);
}

#[test]
fn reeb_critical_value_is_zero() {
    let l = TonelliLagrangian::reeb();
    let c = mane_c_lower(&l, 4).unwrap();
    assert!(c.value.abs() <= 1e-2, "{}", c.value);
    assert!((ratio(&l, &c.witness).unwrap() - c.value).abs() <= 1e-10);
}

#[test]
fn magnetic_contractible_loops_go_negative() {
    let l = TonelliLagrangian::magnetic(2.0);
    let cu = cu_lower(&l, 4).unwrap();
    assert!(cu.value > 0.0);
    assert!(cu.witness.winding().iter().all(|w| *w == 0));
    assert!((ratio(&l, &cu.witness).unwrap() - cu.value).abs() <= 1e-10);
}

#[test]
fn reported_values_are_ordered_and_reproducible() {
    let opts = AscentOptions::default();
    for (name, l) in [
        ("mechanical", TonelliLagrangian::mechanical_cos()),
        ("magnetic", TonelliLagrangian::magnetic(2.0)),
        ("reeb", TonelliLagrangian::reeb()),
        ("free", TonelliLagrangian::free(2).unwrap()),
    ] {
        let cv = critical_values(&l, 128, &opts, &default_form_grid(2)).unwrap();
        assert!(cv.ordered(), "{name}: {cv:?}");
        assert!(cv.cu_raw <= cv.c_raw && cv.c0_raw <= cv.c_raw, "{name}");
        for (v, w) in [(cv.cu_raw, &cv.cu_witness), (cv.c_raw, &cv.c_witness)] {
            assert!((ratio(&l, w).unwrap() - v).abs() <= 1e-10, "{name}");
        }
        if name == "mechanical" {
            // reversible: the zero form is optimal
            assert_eq!(cv.c0_form, vec![0.0, 0.0]);
            assert_eq!(cv.c0_raw, cv.c_raw);
        }
        if name == "reeb" {
            assert!(cv.c0_raw <= 1e-2);
        }
    }
}

#[test]
fn peierls_free_particle_is_zero() {
    let l = TonelliLagrangian::free(2).unwrap();
    for t in [1.0, 10.0] {
        let p = peierls_phi(&l, 0.0, &[0.3, 0.3], &[0.3, 0.3], t, &PeierlsOptions::default()).unwrap();
        assert!(p.phi.unwrap().abs() < 1e-12);
    }
}

#[test]
fn peierls_mechanical_at_the_maximum_tends_to_zero() {
    let l = TonelliLagrangian::mechanical_cos();
    let pts = peierls_scan(&l, 1.0, &[0.0, 0.0], &[0.0, 0.0], &[5.0, 20.0, 50.0], &PeierlsOptions::default()).unwrap();
    for p in pts {
        let phi = p.phi.unwrap();
        assert!((-1e-9..=1e-8).contains(&phi), "T = {}: {phi}", p.period);
    }
}

#[test]
fn peierls_shift_in_c_is_linear_in_t() {
    let l = TonelliLagrangian::magnetic(2.0);
    let opts = PeierlsOptions::default();
    let (q0, q1, t) = ([0.1, 0.2], [0.3, 0.1], 3.0);
    let a = peierls_phi(&l, 0.2, &q0, &q1, t, &opts).unwrap().phi.unwrap();
    let b = peierls_phi(&l, 0.7, &q0, &q1, t, &opts).unwrap().phi.unwrap();
    assert!((b - a - 0.5 * t).abs() <= 1e-9, "{}", b - a - 0.5 * t);
}

#[test]
fn reeb_peierls_barrier_is_bounded() {
    let l = TonelliLagrangian::reeb();
    let grid = [10.0, 20.0, 50.0, 100.0, 200.0];
    let pts = peierls_scan(&l, 0.0, &[0.0, 0.0], &[0.0, 0.0], &grid, &PeierlsOptions::default()).unwrap();
    let phis: Vec<f64> = pts.iter().map(|p| p.phi.expect("converged")).collect();
    let (lo, hi) = phis.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(*p), b.max(*p)));
    assert!(lo > 0.0 && hi / lo <= 3.0, "{phis:?}");
}
