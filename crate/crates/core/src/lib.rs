//! Mittag-Leffler numerics and trajectory-intersection analysis for linear
//! Caputo fractional systems `D^α x = A x`, `0 < α < 1`.
//!
//! The crate is layered bottom-up:
//!
//! * [`scalar_ml`]: the two-parameter Mittag-Leffler function, its
//!   derivative, reciprocal gamma and an L1 Caputo quadrature.
//! * [`ml_zeros`]: argument-principle zero counting and Newton-refined zero
//!   tables for `E_{α,1}` and `E_{α,0}`.
//! * [`matrix_ops`]: small dense eigen/determinant/inverse/kernel kernels.
//! * [`ml_operator`]: the matrix operator `E_{α,β}(t^α A)`.
//! * [`dynamics`]: trajectories, Type I/II classification, same-time and
//!   distinct-time intersections, inverse curves and multiple points.

pub mod dynamics;
pub mod error;
pub mod matrix_ops;
pub mod ml_operator;
pub mod ml_zeros;
pub mod scalar_ml;

pub use error::{Error, Result};
pub use num_complex::Complex64;
