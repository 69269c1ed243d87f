//! Search for contractible loops with negative `(L+k)`-action.

use crate::error::Result;
use crate::flow::{descend, DescentOptions};
use crate::loopspace::{action, EndpointMode, FreeTimeLoop};
use crate::systems::Lagrangian;

/// Action profile `𝒜(T) = K/T + P·T + Θ` of a loop shape whose speeds stay
/// below the truncation radius, recovered from three evaluations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodProfile {
    pub kinetic: f64,
    pub linear: f64,
    pub constant: f64,
}

impl PeriodProfile {
    pub fn of<L: Lagrangian + ?Sized>(l: &L, k: f64, lp: &FreeTimeLoop) -> Result<Self> {
        let a = |t: f64| -> Result<f64> { action(l, &lp.with_period(t)?, k) };
        let (a1, a2, ah) = (a(1.0)?, a(2.0)?, a(0.5)?);
        // a1 = K + P + Θ, a2 = K/2 + 2P + Θ, ah = 2K + P/2 + Θ
        let kinetic = 2.0 * (2.0 * ah - 3.0 * a1 + a2) / 3.0;
        let linear = 2.0 * (2.0 * a2 - 3.0 * a1 + ah) / 3.0;
        let constant = a1 - kinetic - linear;
        Ok(Self {
            kinetic,
            linear,
            constant,
        })
    }

    /// Minimizing period, capped at `t_max` when the profile decreases
    /// without bound.
    pub fn optimal_period(&self, t_max: f64) -> f64 {
        if self.linear <= 0.0 {
            t_max
        } else if self.kinetic <= 0.0 {
            1e-3
        } else {
            (self.kinetic / self.linear).sqrt().min(t_max)
        }
    }
}

/// Sets the period of `lp` to the minimizer of its action profile and
/// returns the loop with its exact discrete action.
pub fn with_optimal_period<L: Lagrangian + ?Sized>(l: &L, k: f64, lp: &FreeTimeLoop, t_max: f64) -> Result<(FreeTimeLoop, f64)> {
    let prof = PeriodProfile::of(l, k, lp)?;
    let out = lp.with_period(prof.optimal_period(t_max))?;
    let a = action(l, &out, k)?;
    Ok((out, a))
}

/// Closed polygon through `vertices` (lifted, first vertex repeated at the
/// end implicitly), sampled uniformly in arclength.
pub fn polygon(vertices: &[Vec<f64>], period: f64, n: usize) -> Result<FreeTimeLoop> {
    let d = vertices[0].len();
    let m = vertices.len();
    let seg_len: Vec<f64> = (0..m)
        .map(|i| {
            let (a, b) = (&vertices[i], &vertices[(i + 1) % m]);
            a.iter().zip(b).map(|(x, y)| (y - x).powi(2)).sum::<f64>().sqrt()
        })
        .collect();
    let total: f64 = seg_len.iter().sum();
    let mut nodes = Vec::with_capacity(n * d);
    let mut seg = 0;
    let mut acc = 0.0;
    for i in 0..n {
        let target = total * i as f64 / n as f64;
        while seg + 1 < m && acc + seg_len[seg] < target {
            acc += seg_len[seg];
            seg += 1;
        }
        let frac = if seg_len[seg] > 0.0 { (target - acc) / seg_len[seg] } else { 0.0 };
        let (a, b) = (&vertices[seg], &vertices[(seg + 1) % m]);
        for c in 0..d {
            nodes.push(a[c] + frac * (b[c] - a[c]));
        }
    }
    FreeTimeLoop::closed(d, nodes, vec![0; d], period)
}

/// Re-reads a contractible closed loop as a loop based at its first node.
pub fn based(lp: &FreeTimeLoop) -> Result<FreeTimeLoop> {
    let mut nodes = lp.nodes().to_vec();
    let d = lp.dim();
    let n = lp.n();
    nodes[n * d..].copy_from_slice(lp.node(0));
    FreeTimeLoop::fixed(d, nodes, lp.period())
}

/// Shifts a closed loop so that its first node sits at `q0`.
fn translated(lp: &FreeTimeLoop, q0: &[f64]) -> Result<FreeTimeLoop> {
    let d = lp.dim();
    let shift: Vec<f64> = (0..d).map(|c| q0[c] - lp.node(0)[c]).collect();
    let nodes: Vec<f64> = (0..lp.n())
        .flat_map(|i| (0..d).map(move |c| (i, c)))
        .map(|(i, c)| lp.node(i)[c] + shift[c])
        .collect();
    FreeTimeLoop::closed(d, nodes, lp.winding().to_vec(), lp.period())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegativeSearch {
    pub nodes: usize,
    /// Polishing descent iterations applied to the best candidate.
    pub polish_iter: usize,
    /// Loops count as negative below `−threshold`.
    pub threshold: f64,
    /// Periods are first capped here (the metric degenerates quickly for
    /// large `T`), and only if no candidate is negative up to `t_max`.
    pub t_cap: f64,
    pub t_max: f64,
}

impl Default for NegativeSearch {
    fn default() -> Self {
        Self {
            nodes: 128,
            polish_iter: 40,
            threshold: 1e-9,
            t_cap: 1.5,
            t_max: 1e3,
        }
    }
}

/// Candidate groups in order of preference: circles, then rectangles of
/// increasing height.
fn candidate_shapes(d: usize, x2_symmetric: bool) -> Vec<Vec<FreeTimeLoop>> {
    let mut groups = Vec::new();
    let mut out = Vec::new();
    let n = 128;
    let center_x2: Vec<f64> = if x2_symmetric { vec![0.0] } else { (0..8).map(|j| j as f64 / 8.0).collect() };
    let radii = [0.01, 0.02, 0.035, 0.05, 0.075, 0.1, 0.13, 0.16, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45];
    for i in 0..16 {
        for &cy in &center_x2 {
            let mut center = vec![0.0; d];
            center[0] = i as f64 / 16.0;
            center[1] = cy;
            for &r in &radii {
                for orient in [1.0, -1.0] {
                    if let Ok(c) = FreeTimeLoop::circle(&center, r, orient, 1.0, n) {
                        out.push(c);
                    }
                }
            }
        }
    }
    groups.push(out);
    // rectangles: up one vertical line, down another
    for h in [1.0, 2.0, 4.0, 8.0, 16.0, 32.0] {
        let mut out = Vec::new();
        for i in 0..8 {
            let a = i as f64 / 8.0;
            for w in [0.25, 0.5] {
                for orient in [1.0, -1.0] {
                    let v = |x1: f64, x2: f64| {
                        let mut p = vec![0.0; d];
                        p[0] = x1;
                        p[1] = x2;
                        p
                    };
                    let mut verts = vec![v(a, 0.0), v(a, h), v(a + w, h), v(a + w, 0.0)];
                    if orient < 0.0 {
                        verts.reverse();
                    }
                    let nodes = (64.0 * (2.0 * h + 2.0 * w)).ceil() as usize;
                    let nodes = (nodes + nodes % 2).clamp(128, 4096);
                    if let Ok(p) = polygon(&verts, 1.0, nodes) {
                        out.push(p);
                    }
                }
            }
        }
        groups.push(out);
    }
    groups
}

/// Looks for a contractible loop (closed, or based at `base`) with
/// `𝒜ₖ < 0`. Candidates are circles in the `(x₁, x₂)` plane and
/// rectangles running along two vertical lines, each with its optimal
/// period. The most negative loop of the first group (circles, then
/// rectangles by height) containing a negative one is polished by a short
/// descent; small loops make better mountain-pass termini than very
/// negative long ones.
pub fn find_negative_action_loop<L: Lagrangian + ?Sized>(
    l: &L,
    k: f64,
    base: Option<&[f64]>,
    opts: &NegativeSearch,
) -> Result<Option<FreeTimeLoop>> {
    let d = l.dim();
    if d < 2 {
        // constant loops are the only contractible shapes worth testing
        let mut best: Option<(FreeTimeLoop, f64)> = None;
        for i in 0..64 {
            let q = vec![i as f64 / 64.0];
            let q = base.map(|b| b.to_vec()).unwrap_or(q);
            let lp = FreeTimeLoop::constant(&q, 1.0, 8)?;
            let (lp, a) = with_optimal_period(l, k, &lp, opts.t_max)?;
            if best.as_ref().is_none_or(|b| a < b.1) {
                best = Some((lp, a));
            }
        }
        return Ok(best.filter(|b| b.1 < -opts.threshold).map(|b| b.0));
    }
    let symmetric = l.translation_symmetries().contains(&1);
    let groups = candidate_shapes(d, symmetric && base.is_none());
    let mut best: Option<(FreeTimeLoop, f64)> = None;
    'caps: for cap in [opts.t_cap, opts.t_max] {
        for group in &groups {
            for shape in group {
                let shape = match base {
                    Some(q0) => translated(shape, q0)?,
                    None => shape.clone(),
                };
                let (lp, a) = with_optimal_period(l, k, &shape, cap)?;
                if a.is_finite() && best.as_ref().is_none_or(|b| a < b.1) {
                    best = Some((lp, a));
                }
            }
            if best.as_ref().is_some_and(|b| b.1 < -opts.threshold) {
                break 'caps;
            }
        }
    }
    let Some((lp, a)) = best else { return Ok(None) };
    let lp = if base.is_some() { based(&lp)? } else { lp };
    let polished = if opts.polish_iter > 0 {
        let s = descend(
            l,
            k,
            &lp,
            &DescentOptions {
                max_iter: opts.polish_iter,
                ..Default::default()
            },
        )?;
        if s.action < a && s.loop_.mode() == lp.mode() {
            (s.loop_, s.action)
        } else {
            (lp, a)
        }
    } else {
        (lp, a)
    };
    debug_assert!(polished.0.winding().iter().all(|w| *w == 0));
    debug_assert!(base.is_none() || polished.0.mode() == EndpointMode::Fixed);
    Ok((polished.1 < -opts.threshold).then_some(polished.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::TonelliLagrangian;

    #[test]
    fn profile_recovers_circle_coefficients() {
        let l = TonelliLagrangian::free(2).unwrap();
        let c = FreeTimeLoop::circle(&[0.0, 0.0], 0.1, 1.0, 1.0, 64).unwrap();
        let p = PeriodProfile::of(&l, 0.3, &c).unwrap();
        assert!((p.linear - 0.3).abs() < 1e-12);
        assert!(p.constant.abs() < 1e-12);
        // ½|v|² with |v| = 2π·0.1 at T = 1, up to the polygonal length
        let k = 0.5 * (2.0 * std::f64::consts::PI * 0.1f64).powi(2);
        assert!((p.kinetic - k).abs() < 1e-3 * k, "{}", p.kinetic);
        assert!((p.optimal_period(1e3) - (p.kinetic / 0.3).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn polygon_is_closed_and_contractible() {
        let p = polygon(&[vec![0.0, 0.0], vec![0.0, 2.0], vec![0.5, 2.0], vec![0.5, 0.0]], 1.0, 40).unwrap();
        assert_eq!(p.winding(), &[0, 0]);
        assert_eq!(p.node(40), p.node(0));
        assert!((crate::loopspace::loop_length(&crate::systems::TorusManifold::flat(2), &p) - 5.0).abs() < 1e-12);
    }
}
