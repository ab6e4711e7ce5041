//! Variable-exponent Lebesgue norms, fractional maximal operators, weight
//! classes, sparse decompositions and kernel conditions on one-dimensional
//! piecewise-constant grids.
//!
//! Exponents are stored through their reciprocals ([`exponent`]), functions
//! are piecewise constant on graded grids ([`grid`]), and every norm is a
//! Luxemburg norm computed by bisection on the modular ([`luxemburg`]).

pub mod cz_sparse;
pub mod error;
pub mod exponent;
pub mod grid;
pub mod kernels;
pub mod luxemburg;
pub mod maximal;
pub mod scenario;
pub mod stats;
pub mod weights;

pub use error::{Error, Result};
pub use exponent::VariableExponent;
pub use grid::{DyadicFamily, Grid, GridFunction, Interval};
