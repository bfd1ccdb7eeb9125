//! Thermal near-cloaking via regularized transformation media.
//!
//! The crate is split along the lines of the computation:
//!
//! * [`xform`] builds the radial and layered coordinate maps and every
//!   coefficient field derived from them (push-forwards, closed-form polar
//!   and spherical cloaks, high-contrast defects).
//! * [`grid`] meshes the box `(-3, 3)^d` with graded tensor-product cells and
//!   assembles multilinear finite-element mass, stiffness and load terms.
//! * [`solve`] holds the linear, steady, time-marching and eigenvalue solvers.
//! * [`bench`] wires those pieces into the reproducible experiments.

pub mod bench;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod output;
pub mod solve;
pub mod xform;

pub use error::{Error, Result};

/// A point of the physical domain.
pub type Point<const D: usize> = nalgebra::SVector<f64, D>;

/// A `D x D` conductivity tensor or Jacobian.
pub type Tensor<const D: usize> = nalgebra::SMatrix<f64, D, D>;
