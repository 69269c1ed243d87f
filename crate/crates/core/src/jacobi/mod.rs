//! Linearized Euler-Lagrange flow, conjugate points, second-variation
//! spectra and the Jacobi-field bound for short geodesics.

mod bound;
mod monodromy;
mod spectrum;

pub use bound::jacobi_bound_check;
pub use monodromy::{conjugate_scan, linearized_flow, linearized_flow_partial, ConjugateReport, Monodromy, RANK_TOL, TIME_TOL};
pub use spectrum::{hessian_spectrum, HessianSpectrum};
