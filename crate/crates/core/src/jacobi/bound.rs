//! Empirical constant in `max{|J|, |J′|, |J″|} ≤ K (|J(0)| + |J(1)|)` for
//! Jacobi fields along short geodesics.

use super::monodromy::linearized_flow;
use crate::error::Result;
use crate::flow::integrate_el;
use crate::fourier::FourierField;
use crate::systems::{TonelliLagrangian, TorusManifold};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEPS: usize = 400;

/// Worst ratio `max_s max{|J|, |DJ|, |D²J|} / (|J(0)| + |J(1)|)` over one
/// random geodesic segment `γ: [0,1]` with `|γ̇| ≤ 1`, maximized over the
/// boundary data. Derivatives are covariant.
///
/// The field is linear in `(J(0), J(1))` and the denominator is a sum of
/// two norms, so the supremum over boundary data is attained with one of
/// the two endpoint values zero: it is the larger operator norm of the two
/// column blocks.
fn trial_ratio(l: &TonelliLagrangian, m: &TorusManifold, rng: &mut ChaCha8Rng) -> Result<f64> {
    let d = m.dim();
    let x0: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
    let mut v0: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let speed = rng.random::<f64>();
    let nv = m.norm(&x0, &v0).max(1e-300);
    v0.iter_mut().for_each(|c| *c *= speed / nv);
    let orbit = integrate_el(l, &x0, &v0, 1.0, 1.0 / STEPS as f64)?;
    let mono = linearized_flow(l, &orbit)?;
    let last = mono.matrices.len() - 1;
    let phi1 = &mono.matrices[last];
    let a = phi1.view((0, 0), (d, d)).into_owned();
    let b_inv = phi1
        .view((0, d), (d, d))
        .into_owned()
        .try_inverse()
        .ok_or_else(|| crate::Error::numeric("conjugate endpoints in Jacobi bound trial"))?;
    // (J(0), J(1)) ↦ (J(0), J′(0))
    let mut init = DMatrix::zeros(2 * d, 2 * d);
    init.view_mut((0, 0), (d, d)).fill_with_identity();
    init.view_mut((d, 0), (d, d)).copy_from(&(-&b_inv * &a));
    init.view_mut((d, d), (d, d)).copy_from(&b_inv);
    let n = mono.times.len();
    let h = 1.0 / (n - 1) as f64;
    let unit = |x: &[f64]| {
        let mut e = vec![0.0; d];
        e[0] = 1.0;
        m.norm(x, &e)
    };
    let mut fields = Vec::with_capacity(n);
    let mut cov = Vec::with_capacity(n);
    for i in 0..n {
        let z = &mono.matrices[i] * &init;
        let (x, v) = mono.states[i].split_at(d);
        let jx = z.rows(0, d).into_owned();
        let mut dj = z.rows(d, d).into_owned();
        for col in 0..2 * d {
            let g = m.christoffel_apply(x, v, jx.column(col).as_slice());
            for r in 0..d {
                dj[(r, col)] += g[r];
            }
        }
        fields.push(jx);
        cov.push(dj);
    }
    let scale0 = unit(mono.states[0].split_at(d).0);
    let scale1 = unit(mono.states[n - 1].split_at(d).0);
    let mut worst = 0.0f64;
    for i in 0..n {
        let (x, v) = mono.states[i].split_at(d);
        // D²J = d/ds DJ + Γ(γ̇, DJ), second-order differences
        let mut dd = if i == 0 {
            (&cov[0] * -3.0 + &cov[1] * 4.0 - &cov[2]) / (2.0 * h)
        } else if i == n - 1 {
            (&cov[i] * 3.0 - &cov[i - 1] * 4.0 + &cov[i - 2]) / (2.0 * h)
        } else {
            (&cov[i + 1] - &cov[i - 1]) / (2.0 * h)
        };
        for col in 0..2 * d {
            let g = m.christoffel_apply(x, v, cov[i].column(col).as_slice());
            for r in 0..d {
                dd[(r, col)] += g[r];
            }
        }
        let here = unit(x);
        for map in [&fields[i], &cov[i], &dd] {
            for (block, scale) in [(0, scale0), (d, scale1)] {
                let sigma = map.view((0, block), (d, d)).into_owned().singular_values().max();
                worst = worst.max(here * sigma / scale);
            }
        }
    }
    Ok(worst)
}

/// Estimates `K` over `trials` random geodesics and boundary data, then
/// counts how many of `trials` fresh samples exceed `1.01 K`.
pub fn jacobi_bound_check(manifold: &TorusManifold, trials: usize, seed: u64) -> Result<(f64, usize)> {
    let d = manifold.dim();
    let l = TonelliLagrangian::new(manifold.clone(), vec![FourierField::zero(); d], FourierField::zero(), 64.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut k = 0.0f64;
    for _ in 0..trials {
        k = k.max(trial_ratio(&l, manifold, &mut rng)?);
    }
    let mut violations = 0;
    for _ in 0..trials {
        if trial_ratio(&l, manifold, &mut rng)? > 1.01 * k {
            violations += 1;
        }
    }
    Ok((k, violations))
}
