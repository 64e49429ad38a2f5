//! Deterministic calculus substrate: uniform lattices, sampled fields, quadrature,
//! finite differences, operator coefficients and smooth test functions.

mod bump;
mod coefficients;
mod grid;
mod quadrature;

pub use bump::{bump_battery, bump_eval, psi, psi_prime, psi_second, Derivative, TestFunction};
pub use coefficients::{scalar_fn, CoefSpec, CoefficientSet, Partial, PartialSource, Poly2, PolyTerm, ScalarFn};
pub use grid::{make_grid, Bounds, GridParams, GridSpec, LatticeField, ScalarField};
pub(crate) use grid::steps_in;
pub use quadrature::{
    central_diff, default_fd_step, derivative_1d, integrate_2d, integrate_lattice, integrate_time, simpson, trapezoid, Axis,
    TimeRule,
};
