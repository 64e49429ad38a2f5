//! Numerical laboratory for first-order stochastic PDEs driven by Brownian-sheet noise.
//!
//! The crate builds Brownian sheets on a uniform lattice, constructs the closed-form and
//! Wiener-Ito solutions of `r_t - r_x = D W` with `W(t, x) = B(t, t + x)`, checks them
//! against the weak (test-function) formulation, and measures the quadratic-variation
//! dichotomy that decides whether a function-valued solution exists.

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod gaussian_field;
pub mod grid_calculus;
pub mod io;
pub mod operators;
pub mod rng;
pub mod solver;
pub mod stats;
pub mod yield_curve;

pub use error::{Error, Result};
