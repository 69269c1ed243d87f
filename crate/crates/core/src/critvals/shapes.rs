//! Multistart families of loops for the critical-value ascents.

use crate::loopspace::FreeTimeLoop;
use crate::minimax::polygon;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Family {
    All,
    Contractible,
}

fn grid_points(d: usize, per_axis: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![]];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|p: Vec<f64>| {
                (0..per_axis).map(move |i| {
                    let mut q = p.clone();
                    q.push(i as f64 / per_axis as f64);
                    q
                })
            })
            .collect();
    }
    out
}

fn windings(d: usize) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|p: Vec<i64>| {
                [-1, 0, 1].into_iter().map(move |w| {
                    let mut q = p.clone();
                    q.push(w);
                    q
                })
            })
            .collect();
    }
    out.retain(|w| w.iter().any(|c| *c != 0));
    out
}

/// Constants, straight loops in every nonzero class of `{−1,0,1}^d`
/// (skipped for contractible families), circles in the `(x₁, x₂)` plane and
/// rectangles running up one vertical line and down another.
pub(crate) fn candidate_loops(d: usize, family: Family) -> Vec<FreeTimeLoop> {
    let per_axis = if d <= 2 { 16 } else { 6 };
    let mut out = Vec::new();
    for q in grid_points(d, per_axis) {
        if let Ok(c) = FreeTimeLoop::constant(&q, 1.0, 8) {
            out.push(c);
        }
    }
    if family == Family::All {
        let starts = grid_points(d, if d <= 2 { 8 } else { 4 });
        for w in windings(d) {
            for q in &starts {
                if let Ok(s) = FreeTimeLoop::straight(q, &w, 1.0, 64) {
                    out.push(s);
                }
            }
        }
    }
    if d >= 2 {
        let radii = [0.02, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45];
        for center in grid_points(2, 8) {
            let mut c = vec![0.0; d];
            c[..2].copy_from_slice(&center);
            for &r in &radii {
                for orient in [1.0, -1.0] {
                    if let Ok(lp) = FreeTimeLoop::circle(&c, r, orient, 1.0, 64) {
                        out.push(lp);
                    }
                }
            }
        }
        for i in 0..8 {
            let a = i as f64 / 8.0;
            for w in [0.25, 0.5] {
                for h in [1.0, 2.0, 4.0, 8.0, 16.0, 32.0] {
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
                        let n = (8.0 * (2.0 * h + 2.0 * w)).ceil() as usize;
                        if let Ok(p) = polygon(&verts, 1.0, (n + n % 2).max(64)) {
                            out.push(p);
                        }
                    }
                }
            }
        }
    }
    out
}
