//! Period-dependent weights of the loop-space metric
//! `<(ξ,α),(η,β)> = αβ + f(T)<ξ(0),η(0)> + g(T)∫<ξ',η'>`.
//!
//! Both weights equal `T²` for `T <= 1`; for `T >= 10`, `f = 1` and
//! `g = e^{-4T²}/T`. In between they are C¹ Hermite blends that stay below 2:
//! on `(1, 1.5)` a cubic returning to 1 with zero slope, then `f ≡ 1` and
//! `ln g` is smoothstepped from 0 into `-4T² - ln T` over `[1.5, 10]`.

use serde::{Deserialize, Serialize};

/// Which weights the metric uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricWeights {
    /// The completing weights described in the module docs.
    #[default]
    Completing,
    /// `f ≡ g ≡ 1`, locally equivalent to the completing metric.
    Unit,
}

const KNEE: f64 = 1.5;
const TAIL: f64 = 10.0;

/// Lower clamp for `ln g` inside linear solves; `e^{-600}` is still a normal
/// double while `g` itself underflows for `T` beyond roughly 13.
pub const LN_G_FLOOR: f64 = -600.0;

fn hermite_bump(t: f64) -> f64 {
    // value 0 at both ends, slope 2 at the left end, 0 at the right end
    let tau = (t - 1.0) / (KNEE - 1.0);
    (KNEE - 1.0) * 2.0 * (tau * tau * tau - 2.0 * tau * tau + tau)
}

fn tail_log(t: f64) -> f64 {
    -4.0 * t * t - t.ln()
}

impl MetricWeights {
    pub fn f(self, t: f64) -> f64 {
        match self {
            MetricWeights::Unit => 1.0,
            MetricWeights::Completing => {
                if t <= 1.0 {
                    t * t
                } else if t < KNEE {
                    1.0 + hermite_bump(t)
                } else {
                    1.0
                }
            }
        }
    }

    /// `ln g(T)`, finite for every `T > 0`.
    pub fn ln_g(self, t: f64) -> f64 {
        match self {
            MetricWeights::Unit => 0.0,
            MetricWeights::Completing => {
                if t <= 1.0 {
                    2.0 * t.ln()
                } else if t < KNEE {
                    hermite_bump(t)
                } else if t < TAIL {
                    let tau = (t - KNEE) / (TAIL - KNEE);
                    let s = tau * tau * (3.0 - 2.0 * tau);
                    s * tail_log(t)
                } else {
                    tail_log(t)
                }
            }
        }
    }

    pub fn g(self, t: f64) -> f64 {
        match self {
            MetricWeights::Completing if t <= 1.0 => t * t,
            MetricWeights::Completing if t >= TAIL => (-4.0 * t * t).exp() / t,
            _ => self.ln_g(t).exp(),
        }
    }

    /// `(f(T), g(T))`.
    pub fn eval(self, t: f64) -> (f64, f64) {
        (self.f(t), self.g(t))
    }

    /// `g` as used by solvers, clamped below at `e^{LN_G_FLOOR}`.
    pub fn g_solver(self, t: f64) -> f64 {
        self.ln_g(t).max(LN_G_FLOOR).exp()
    }
}

/// `(f(T), g(T))` for the completing weights.
pub fn weights(t: f64) -> (f64, f64) {
    MetricWeights::Completing.eval(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinned_values() {
        assert_eq!(weights(0.5), (0.25, 0.25));
        let (f, g) = weights(20.0);
        assert_eq!(f, 1.0);
        assert_eq!(g, (-1600f64).exp() / 20.0);
        let (f, g) = weights(10.0);
        assert_eq!(f, 1.0);
        assert_eq!(g, (-400f64).exp() / 10.0);
    }

    #[test]
    fn continuous_at_the_knots() {
        let w = MetricWeights::Completing;
        assert_eq!(w.f(1.0), 1.0);
        assert!((w.f(1.0 + 1e-12) - 1.0).abs() < 1e-11);
        assert!((w.ln_g(10.0 - 1e-9) - w.ln_g(10.0)).abs() < 1e-6);
        assert_eq!(w.ln_g(10.0), tail_log(10.0));
        assert!((w.ln_g(KNEE - 1e-12) - w.ln_g(KNEE)).abs() < 1e-10);
    }

    #[test]
    fn derivatives_continuous_and_bounded() {
        let w = MetricWeights::Completing;
        let h = 1e-7;
        for knot in [1.0, KNEE, TAIL] {
            let left = (w.ln_g(knot - h) - w.ln_g(knot - 2.0 * h)) / h;
            let right = (w.ln_g(knot + 2.0 * h) - w.ln_g(knot + h)) / h;
            assert!((left - right).abs() < 1e-4 * (1.0 + left.abs()), "ln g slope jump at {knot}");
            let left = (w.f(knot - h) - w.f(knot - 2.0 * h)) / h;
            let right = (w.f(knot + 2.0 * h) - w.f(knot + h)) / h;
            assert!((left - right).abs() < 1e-4, "f slope jump at {knot}");
        }
        let mut t = 1e-3;
        while t < 30.0 {
            let (f, g) = w.eval(t);
            assert!(f > 0.0 && f <= 2.0);
            assert!(g <= 2.0 && w.ln_g(t).is_finite());
            t *= 1.01;
        }
    }
}
