//! Critical energy values `e₀ ≤ c_u ≤ c₀ ≤ c` and the Peierls barrier.
//!
//! `c(L) = sup −A_L(γ)/T` over closed loops (an exact rearrangement of
//! `A_{L+k} ≥ 0`), so every loop is a witness for a lower bound. `c_u`
//! restricts to contractible loops and `c₀` minimizes `c(L − ω)` over
//! constant one-forms `ω`.

mod peierls;
mod shapes;

pub use peierls::{peierls_phi, peierls_scan, rectangle_path, PeierlsOptions, PeierlsPoint};

use crate::error::{Error, Result};
use crate::flow::{descend_objective, DescentOptions};
use crate::loopspace::{action, d_action, FreeTimeLoop};
use crate::minimax::PeriodProfile;
use crate::systems::{Jet, Lagrangian, TorusManifold};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use shapes::{candidate_loops, Family};

/// `e₀ = max_x E(x, 0) = max_x −L(x, 0)`: grid maximum followed by a
/// Newton polish of the maximizer.
pub fn e0_exact<L: Lagrangian + ?Sized>(l: &L, grid: usize) -> Result<f64> {
    if grid < 64 {
        return Err(Error::invalid(format!("e0 grid must have at least 64 points per axis, got {grid}")));
    }
    let d = l.dim();
    let zero = vec![0.0; d];
    let total = grid.checked_pow(d as u32).ok_or_else(|| Error::invalid("e0 grid too large"))?;
    let point = |idx: usize| -> Vec<f64> {
        let mut x = vec![0.0; d];
        let mut r = idx;
        for c in (0..d).rev() {
            x[c] = (r % grid) as f64 / grid as f64;
            r /= grid;
        }
        x
    };
    let (best_idx, best) = (0..total)
        .into_par_iter()
        .map(|i| (i, -l.value(&point(i), &zero)))
        .reduce(|| (usize::MAX, f64::NEG_INFINITY), |a, b| if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a });
    let mut x = point(best_idx);
    let mut e = best;
    let mut jet = Jet::new(d);
    for _ in 0..20 {
        l.eval(&x, &zero, true, &mut jet);
        // maximize −L(x, 0): Newton on ∇L = 0 where the Hessian is definite
        let g = DVector::from_column_slice(&jet.lx);
        let h = DMatrix::from_row_slice(d, d, &jet.lxx);
        let Some(step) = (-h).cholesky().map(|c| c.solve(&g)) else { break };
        let cand: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a + s).collect();
        let ec = -l.value(&cand, &zero);
        if !(ec > e) {
            break;
        }
        x = cand;
        e = ec;
    }
    // −0 for systems with L(x, 0) ≡ 0
    Ok(e + 0.0)
}

/// `L − ⟨λ, v⟩` for a constant one-form `λ`.
#[derive(Debug, Clone)]
pub struct FormShift<'a, L: ?Sized> {
    pub base: &'a L,
    pub lambda: Vec<f64>,
}

impl<L: Lagrangian + ?Sized> Lagrangian for FormShift<'_, L> {
    fn manifold(&self) -> &TorusManifold {
        self.base.manifold()
    }

    fn eval(&self, x: &[f64], v: &[f64], second: bool, jet: &mut Jet) {
        self.base.eval(x, v, second, jet);
        for (c, lam) in self.lambda.iter().enumerate() {
            jet.value -= lam * v[c];
            jet.lv[c] -= lam;
        }
    }

    fn truncation_radius(&self) -> f64 {
        self.base.truncation_radius()
    }

    fn translation_symmetries(&self) -> Vec<usize> {
        self.base.translation_symmetries()
    }
}

/// A lower bound `−A_L(γ)/T` with the loop attaining it.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalBound {
    pub value: f64,
    pub witness: FreeTimeLoop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AscentOptions {
    /// Number of best-scoring multistart candidates polished by ascent.
    pub budget: usize,
    pub max_iter: usize,
    pub gtol: f64,
    /// Largest period considered.
    pub t_max: f64,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self {
            budget: 4,
            max_iter: 400,
            gtol: 1e-8,
            t_max: 1e3,
        }
    }
}

/// `−A_L(γ)/T` of a loop.
pub fn ratio<L: Lagrangian + ?Sized>(l: &L, lp: &FreeTimeLoop) -> Result<f64> {
    Ok(-action(l, lp, 0.0)? / lp.period() + 0.0)
}

/// Best period for the ratio of a shape with action profile
/// `K/T + P T + Θ`: `−A/T = −K u² − Θ u − P` with `u = 1/T`.
fn best_ratio_period(p: &PeriodProfile, t_max: f64) -> f64 {
    if p.kinetic <= 0.0 {
        return 1.0;
    }
    let u = -p.constant / (2.0 * p.kinetic);
    if u <= 1.0 / t_max {
        t_max
    } else {
        (1.0 / u).max(1e-3)
    }
}

/// Maximizes `−A_L/T` by descent on `A_L/T` from `start`.
fn ascend<L: Lagrangian + ?Sized>(l: &L, start: &FreeTimeLoop, opts: &AscentOptions) -> Result<FreeTimeLoop> {
    let obj = |lp: &FreeTimeLoop| -> Result<(f64, Vec<f64>)> {
        let parts = d_action(l, lp, 0.0)?;
        let t = lp.period();
        let mut g = parts.differential.to_free();
        let last = g.len() - 1;
        g.iter_mut().for_each(|c| *c /= t);
        g[last] -= parts.value / (t * t);
        Ok((parts.value / t, g))
    };
    let d_opts = DescentOptions {
        gtol: opts.gtol,
        max_iter: opts.max_iter,
        t_ceiling: opts.t_max,
        ..Default::default()
    };
    let state = descend_objective(l.manifold(), &obj, 1.0 / start.period(), start, &d_opts)?;
    Ok(state.loop_)
}

/// Scores every candidate in closed form over `T`, then polishes the best
/// `budget` ones. Ties go to the earlier candidate.
fn sup_ratio<L: Lagrangian + ?Sized>(l: &L, candidates: Vec<FreeTimeLoop>, opts: &AscentOptions) -> Result<CriticalBound> {
    let scored: Vec<(FreeTimeLoop, f64)> = candidates
        .into_par_iter()
        .map(|c| -> Result<(FreeTimeLoop, f64)> {
            // the shape at its own period competes with the profile optimum
            let prof = PeriodProfile::of(l, 0.0, &c)?;
            let lp = c.with_period(best_ratio_period(&prof, opts.t_max))?;
            let (r, r0) = (ratio(l, &lp)?, ratio(l, &c)?);
            let (lp, r) = if r0 >= r || !r.is_finite() { (c, r0) } else { (lp, r) };
            Ok((lp, if r.is_finite() { r } else { f64::NEG_INFINITY }))
        })
        .collect::<Result<_>>()?;
    if scored.is_empty() {
        return Err(Error::invalid("no candidate loops"));
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|a, b| scored[*b].1.total_cmp(&scored[*a].1).then(a.cmp(b)));
    let polished: Vec<(FreeTimeLoop, f64)> = order
        .iter()
        .take(opts.budget.max(1))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|&i| -> Result<(FreeTimeLoop, f64)> {
            let (lp, r) = &scored[i];
            let out = ascend(l, lp, opts)?;
            let ro = ratio(l, &out)?;
            Ok(if ro > *r { (out, ro) } else { (lp.clone(), *r) })
        })
        .collect::<Result<_>>()?;
    let mut best = (scored[order[0]].0.clone(), scored[order[0]].1);
    for (lp, r) in polished {
        if r > best.1 {
            best = (lp, r);
        }
    }
    Ok(CriticalBound {
        value: best.1,
        witness: best.0,
    })
}

/// Lower bound for `c(L)` over all winding classes in `{−1,0,1}^d`,
/// constants, circles and leaf rectangles, plus any `seeds`.
pub fn mane_c_lower_with<L: Lagrangian + ?Sized>(l: &L, opts: &AscentOptions, seeds: &[FreeTimeLoop]) -> Result<CriticalBound> {
    let mut cands = candidate_loops(l.dim(), Family::All);
    cands.extend(seeds.iter().cloned());
    sup_ratio(l, cands, opts)
}

pub fn mane_c_lower<L: Lagrangian + ?Sized>(l: &L, budget: usize) -> Result<CriticalBound> {
    mane_c_lower_with(l, &AscentOptions { budget, ..Default::default() }, &[])
}

/// Lower bound for `c_u(L)`: contractible loops only.
pub fn cu_lower_with<L: Lagrangian + ?Sized>(l: &L, opts: &AscentOptions) -> Result<CriticalBound> {
    sup_ratio(l, candidate_loops(l.dim(), Family::Contractible), opts)
}

pub fn cu_lower<L: Lagrangian + ?Sized>(l: &L, budget: usize) -> Result<CriticalBound> {
    cu_lower_with(l, &AscentOptions { budget, ..Default::default() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct C0Estimate {
    pub value: f64,
    /// Minimizing constant form `λ`.
    pub form: Vec<f64>,
    pub witness: FreeTimeLoop,
}

/// Relative spread below which two values of `c(L − λ·dx)` tie.
const C0_TIE: f64 = 1e-12;

/// Lower value wins; ties go to the smaller form.
fn better(value: f64, lam: &[f64], best: f64, best_lam: &[f64]) -> bool {
    let tol = C0_TIE * best.abs().max(1.0);
    let norm = |l: &[f64]| l.iter().map(|x| x * x).sum::<f64>();
    value < best - tol || (value <= best + tol && norm(lam) < norm(best_lam))
}

/// `min_λ c(L − λ·dx)` over `form_grid`, then a coordinate-descent polish
/// of `λ`. `seeds` (typically the contractible witnesses) enter every
/// inner ascent; `zero_form` reuses an already computed `c(L)`.
pub fn c0_estimate_with<L: Lagrangian + ?Sized>(
    l: &L,
    form_grid: &[Vec<f64>],
    opts: &AscentOptions,
    seeds: &[FreeTimeLoop],
    zero_form: Option<&CriticalBound>,
) -> Result<C0Estimate> {
    if form_grid.is_empty() {
        return Err(Error::invalid("form grid is empty"));
    }
    let d = l.dim();
    // inner ascents are cheaper: the closed-form scoring already finds the
    // best class for each form
    let inner = AscentOptions {
        budget: 1,
        max_iter: opts.max_iter.min(100),
        ..*opts
    };
    let eval = |lambda: &[f64]| -> Result<CriticalBound> {
        if lambda.iter().all(|x| *x == 0.0) {
            if let Some(z) = zero_form {
                return Ok(z.clone());
            }
        }
        let shifted = FormShift {
            base: l,
            lambda: lambda.to_vec(),
        };
        mane_c_lower_with(&shifted, &inner, seeds)
    };
    let mut best: Option<(Vec<f64>, CriticalBound)> = None;
    for lam in form_grid {
        if lam.len() != d {
            return Err(Error::invalid("form grid entries must have one component per dimension"));
        }
        let b = eval(lam)?;
        if best.as_ref().is_none_or(|(bl, cb)| better(b.value, lam, cb.value, bl)) {
            best = Some((lam.clone(), b));
        }
    }
    let (mut lam, mut bound) = best.expect("non-empty grid");
    // spacing of the grid along each axis sets the first polish step
    let mut step = form_grid
        .iter()
        .flat_map(|g| g.iter().zip(&lam).map(|(a, b)| (a - b).abs()))
        .filter(|x| *x > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !step.is_finite() {
        step = 0.25;
    }
    step *= 0.5;
    for _ in 0..2 {
        for c in 0..d {
            for sign in [1.0, -1.0] {
                let mut trial = lam.clone();
                trial[c] += sign * step;
                let b = eval(&trial)?;
                if better(b.value, &trial, bound.value, &lam) {
                    lam = trial;
                    bound = b;
                }
            }
        }
        step *= 0.5;
    }
    Ok(C0Estimate {
        value: bound.value,
        form: lam,
        witness: bound.witness,
    })
}

/// Square grid `{−½, 0, ½}^d` of constant forms.
pub fn default_form_grid(d: usize) -> Vec<Vec<f64>> {
    let vals = [-0.5, 0.0, 0.5];
    let mut out = vec![vec![]];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|p: Vec<f64>| {
                vals.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push(*v);
                    q
                })
            })
            .collect();
    }
    out
}

pub fn c0_estimate<L: Lagrangian + ?Sized>(l: &L, form_grid: &[Vec<f64>]) -> Result<f64> {
    Ok(c0_estimate_with(l, form_grid, &AscentOptions::default(), &[], None)?.value)
}

/// All critical values with raw ascent results and clamped values.
///
/// Clamping: `c_u = max(e₀, c_u_raw)`, `c = max(e₀, c_raw)`,
/// `c₀ = max(e₀, c₀_raw)`. The contractible witness seeds both the `c` and
/// the `c₀` ascents, so `c_u_raw ≤ c₀_raw ≤ c_raw` holds by construction
/// (`ω = 0` belongs to the form grid and reuses the `c` ascent).
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalValues {
    pub e0: f64,
    pub cu_raw: f64,
    pub cu: f64,
    pub c0_raw: f64,
    pub c0: f64,
    pub c0_form: Vec<f64>,
    pub c_raw: f64,
    pub c: f64,
    pub cu_witness: FreeTimeLoop,
    pub c0_witness: FreeTimeLoop,
    pub c_witness: FreeTimeLoop,
}

impl CriticalValues {
    /// `e₀ ≤ c_u ≤ c₀ ≤ c` on the clamped values.
    pub fn ordered(&self) -> bool {
        self.e0 <= self.cu && self.cu <= self.c0 && self.c0 <= self.c
    }
}

pub fn critical_values<L: Lagrangian + ?Sized>(l: &L, e0_grid: usize, opts: &AscentOptions, form_grid: &[Vec<f64>]) -> Result<CriticalValues> {
    let e0 = e0_exact(l, e0_grid)?;
    let cu = cu_lower_with(l, opts)?;
    let c = mane_c_lower_with(l, opts, std::slice::from_ref(&cu.witness))?;
    let mut grid = form_grid.to_vec();
    if !grid.iter().any(|g| g.iter().all(|x| *x == 0.0)) {
        grid.push(vec![0.0; l.dim()]);
    }
    let c0 = c0_estimate_with(l, &grid, opts, std::slice::from_ref(&cu.witness), Some(&c))?;
    Ok(CriticalValues {
        e0,
        cu_raw: cu.value,
        cu: cu.value.max(e0),
        c0_raw: c0.value,
        c0: c0.value.max(e0),
        c0_form: c0.form,
        c_raw: c.value,
        c: c.value.max(e0),
        cu_witness: cu.witness,
        c0_witness: c0.witness,
        c_witness: c.witness,
    })
}
