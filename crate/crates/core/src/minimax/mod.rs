//! Mountain-pass geometry: loops of negative action, the explicit
//! threshold, path relaxation and the energy sweep.

mod negative;
mod path;
mod sweep;
mod threshold;

pub use negative::{based, find_negative_action_loop, polygon, with_optimal_period, NegativeSearch, PeriodProfile};
pub use path::{init_path, relax_minimax, MinimaxOptions, MinimaxResult, PathOfLoops};
pub use sweep::{mountain_pass, struwe_sweep, SweepOptions, SweepRecord};
pub use threshold::{curl_bound, lower_bound_c, threshold_formula, ThresholdParts, B_MIN};
