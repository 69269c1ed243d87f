mod common;

use common::{random_closed, random_tangent, rng, systems};
use freetime::flow::{descend, growth_constants, length_bound_holds, DescentOptions};
use freetime::loopspace::{
    action, d_action, h1_gradient, inner, loop_length, read_loop, resample, weights, winding_class, write_loop,
};
use freetime::{FreeTimeLoop, Lagrangian, MetricWeights, TonelliLagrangian};
use std::f64::consts::{PI, TAU};

/// Action of the uniformly parametrized circle `c + r(cos φ, σ sin φ)` for
/// `L = ½|v|² − ε sin(2πx₁) v₂`, by a fine periodic trapezoid rule.
fn circle_action_oracle(eps: f64, c: [f64; 2], r: f64, sigma: f64, t: f64, k: f64) -> f64 {
    let m = 200_000;
    let h = TAU / m as f64;
    let flux: f64 = (0..m)
        .map(|i| {
            let phi = i as f64 * h;
            let x1 = c[0] + r * phi.cos();
            -eps * (TAU * x1).sin() * sigma * r * phi.cos() * h
        })
        .sum();
    2.0 * PI * PI * r * r / t + k * t + flux
}

#[test]
fn magnetic_circle_action_matches_fine_quadrature() {
    let l = TonelliLagrangian::magnetic(2.0);
    for sigma in [1.0, -1.0] {
        let lp = FreeTimeLoop::circle(&[0.3, 0.2], 0.1, sigma, 0.5, 256).unwrap();
        let got = action(&l, &lp, 0.02).unwrap();
        let want = circle_action_oracle(2.0, [0.3, 0.2], 0.1, sigma, 0.5, 0.02);
        assert!((got - want).abs() <= 1e-6, "sigma {sigma}: {got} vs {want}");
    }
}

#[test]
fn constant_and_straight_loop_actions() {
    let mech = TonelliLagrangian::mechanical_cos();
    let c = FreeTimeLoop::constant(&[0.0, 0.0], 3.0, 16).unwrap();
    assert!((action(&mech, &c, 2.0).unwrap() - 3.0).abs() < 1e-14);
    let free = TonelliLagrangian::free(2).unwrap();
    let s = FreeTimeLoop::straight(&[0.0, 0.0], &[1, 0], 2.0, 16).unwrap();
    assert!((action(&free, &s, 0.0).unwrap() - 0.25).abs() < 1e-14);
}

#[test]
fn reparametrization_identity() {
    // 𝒜ₖ(x, T) = A_{L+k}(y) with y(t) = x(t/T): scaling T by λ on a
    // straight free loop scales the kinetic part by 1/λ and kT by λ
    let free = TonelliLagrangian::free(2).unwrap();
    for t in [0.5, 1.0, 4.0] {
        let s = FreeTimeLoop::straight(&[0.1, 0.7], &[2, 1], t, 32).unwrap();
        let want = 5.0 / (2.0 * t) + 0.3 * t;
        assert!((action(&free, &s, 0.3).unwrap() - want).abs() < 1e-13);
    }
}

#[test]
fn differential_matches_central_differences() {
    let mut r = rng(11);
    for (name, l) in systems() {
        for trial in 0..4 {
            let lp = random_closed(&mut r, &[trial as i64 % 2, 0], 64);
            let k = 0.4;
            let dif = d_action(&l, &lp, k).unwrap().differential;
            let xi = random_tangent(&mut r, &lp);
            let h = 1e-5;
            let plus = action(&l, &lp.displaced(&xi, h).unwrap(), k).unwrap();
            let minus = action(&l, &lp.displaced(&xi, -h).unwrap(), k).unwrap();
            let fd = (plus - minus) / (2.0 * h);
            let an = dif.pair(&lp, &xi);
            assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "{name}: {fd} vs {an}");
        }
    }
}

#[test]
fn gradient_duality() {
    let mut r = rng(12);
    for (name, l) in systems() {
        for _ in 0..2 {
            let lp = random_closed(&mut r, &[0, 1], 64);
            let g = h1_gradient(&l, &lp, 0.1, MetricWeights::Completing).unwrap();
            let dif = d_action(&l, &lp, 0.1).unwrap().differential;
            let xi = random_tangent(&mut r, &lp);
            let lhs = inner(l.manifold(), &lp, MetricWeights::Completing, &g, &xi);
            let rhs = dif.pair(&lp, &xi);
            assert!((lhs - rhs).abs() <= 1e-8 * rhs.abs().max(1e-3), "{name}: {lhs} vs {rhs}");
        }
    }
}

#[test]
fn constant_loop_gradient_moves_only_the_period() {
    // the flow is Ψ_s(x,T) = (x, T − a s) with a = k − V(q₀)
    let l = TonelliLagrangian::mechanical_cos();
    let lp = FreeTimeLoop::constant(&[0.5, 0.25], 0.7, 16).unwrap();
    let g = h1_gradient(&l, &lp, 0.5, MetricWeights::Completing).unwrap();
    assert!((g.period - 1.5).abs() < 1e-14);
    assert!(g.nodes.iter().all(|c| c.abs() < 1e-12));
}

#[test]
fn weight_values() {
    assert_eq!(weights(0.5), (0.25, 0.25));
    let (f, g) = weights(20.0);
    assert_eq!(f, 1.0);
    assert_eq!(g, (-1600f64).exp() / 20.0);
    for t in [0.01, 0.9, 1.2, 3.0, 9.0, 50.0] {
        let (f, g) = weights(t);
        assert!(f > 0.0 && f <= 2.0 && (0.0..=2.0).contains(&g));
    }
}

#[test]
fn resampling_converges_quadratically() {
    let l = TonelliLagrangian::magnetic(2.0);
    let fine = FreeTimeLoop::circle(&[0.2, 0.4], 0.15, 1.0, 0.6, 1024).unwrap();
    let exact = action(&l, &fine, 0.1).unwrap();
    let err = |n: usize| (action(&l, &resample(&fine, n).unwrap(), 0.1).unwrap() - exact).abs();
    let (e1, e2) = (err(64), err(128));
    // linear interpolation of the nodes: second order
    assert!(e2 < e1 / 3.0, "{e1} {e2}");
}

#[test]
fn lengths_and_windings() {
    let m = freetime::TorusManifold::flat(2);
    let s = FreeTimeLoop::straight(&[0.0, 0.0], &[1, 0], 1.0, 16).unwrap();
    assert!((loop_length(&m, &s) - 1.0).abs() < 1e-14);
    assert_eq!(winding_class(&s), vec![1, 0]);
    let c = FreeTimeLoop::constant(&[0.3, 0.3], 1.0, 16).unwrap();
    assert_eq!(loop_length(&m, &c), 0.0);
    assert_eq!(winding_class(&c), vec![0, 0]);
}

#[test]
fn loop_files_round_trip() {
    let mut r = rng(3);
    let lp = random_closed(&mut r, &[1, -1], 32);
    let mut buf = Vec::new();
    write_loop(&mut buf, &lp).unwrap();
    assert_eq!(read_loop(buf.as_slice()).unwrap(), lp);
}

#[test]
fn length_bound_along_descent() {
    let l = TonelliLagrangian::magnetic(2.0);
    let (a1, _) = growth_constants(&l);
    assert!(a1 > 0.0);
    let mut r = rng(5);
    for w in [[0, 0], [1, 0], [1, 1]] {
        let start = random_closed(&mut r, &w, 64);
        let opts = DescentOptions {
            max_iter: 200,
            ..Default::default()
        };
        let s = descend(&l, 0.5, &start, &opts).unwrap();
        assert!(length_bound_holds(&l, 0.5, &start).unwrap());
        assert!(length_bound_holds(&l, 0.5, &s.loop_).unwrap());
        assert_eq!(s.loop_.winding(), start.winding());
    }
}
