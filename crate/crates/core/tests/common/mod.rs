#![allow(dead_code)]

use freetime::{FreeTimeLoop, LoopTangent, TonelliLagrangian, TorusManifold, FourierField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// The built-in systems plus a conformal torus with a potential.
pub fn systems() -> Vec<(&'static str, TonelliLagrangian)> {
    let u = FourierField::zero().with_term(&[0, 1], 0.15, 0.05);
    let v = FourierField::zero().with_term(&[1, 1], 0.3, 0.0);
    let a = vec![FourierField::zero().with_term(&[0, 1], 0.0, 0.4), FourierField::zero()];
    let conformal = TonelliLagrangian::new(TorusManifold::conformal(2, u).unwrap(), a, v, 64.0).unwrap();
    vec![
        ("mechanical", TonelliLagrangian::mechanical_cos()),
        ("magnetic", TonelliLagrangian::magnetic(2.0)),
        ("reeb", TonelliLagrangian::reeb()),
        ("free", TonelliLagrangian::free(2).unwrap()),
        ("conformal", conformal),
    ]
}

/// Smooth random closed loop: a straight loop of the given winding plus a
/// few random Fourier modes.
pub fn random_closed(rng: &mut ChaCha8Rng, winding: &[i64], n: usize) -> FreeTimeLoop {
    let d = winding.len();
    let base: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
    let modes: Vec<[f64; 2]> = (0..d * 3).map(|_| std::array::from_fn(|_| rng.random_range(-0.08..0.08))).collect();
    let mut nodes = Vec::with_capacity(n * d);
    for i in 0..n {
        let s = i as f64 / n as f64;
        for c in 0..d {
            let mut x = base[c] + winding[c] as f64 * s;
            for m in 0..3 {
                let [a, b] = modes[c * 3 + m];
                let f = TAU * (m + 1) as f64 * s;
                x += a * f.cos() + b * f.sin();
            }
            nodes.push(x);
        }
    }
    let period = rng.random_range(0.3..2.5);
    FreeTimeLoop::closed(d, nodes, winding.to_vec(), period).unwrap()
}

/// Random smooth admissible tangent.
pub fn random_tangent(rng: &mut ChaCha8Rng, lp: &FreeTimeLoop) -> LoopTangent {
    let d = lp.dim();
    let n = lp.n();
    let coef: Vec<[f64; 2]> = (0..d * 3).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    let mut t = LoopTangent::zeros(lp);
    for i in 0..=n {
        let s = i as f64 / n as f64;
        for c in 0..d {
            let mut x = 0.0;
            for m in 0..3 {
                let f = TAU * m as f64 * s;
                x += coef[c * 3 + m][0] * f.cos() + coef[c * 3 + m][1] * f.sin();
            }
            t.nodes[i * d + c] = x;
        }
    }
    if lp.mode() == freetime::EndpointMode::Fixed {
        for c in 0..d {
            t.nodes[c] = 0.0;
            t.nodes[n * d + c] = 0.0;
        }
    }
    t.period = rng.random_range(-1.0..1.0);
    t
}
