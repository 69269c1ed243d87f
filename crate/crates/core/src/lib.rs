//! Periodic orbits of Tonelli Lagrangians on prescribed energy levels,
//! found as critical points of the free-period action functional on the
//! torus.

// `!(x > 0.0)` rejects NaN on purpose; index loops mirror the formulas
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod critvals;
pub mod error;
pub mod flow;
pub mod fourier;
pub mod jacobi;
pub mod linalg;
pub mod loopspace;
pub mod minimax;
pub mod systems;

pub use error::{Error, Result};
pub use fourier::FourierField;
pub use loopspace::{EndpointMode, FreeTimeLoop, LoopCotangent, LoopTangent, MetricWeights};
pub use systems::{Lagrangian, SystemSpec, TonelliLagrangian, TorusManifold};
