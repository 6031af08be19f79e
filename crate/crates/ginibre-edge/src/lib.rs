//! Finite-n and limiting laws for the spectral radius and the rightmost
//! eigenvalue of products of independent complex Ginibre matrices.
//!
//! The radial statistics reduce to independent products of Gamma variables,
//! so nothing here ever forms a random matrix. The rightmost eigenvalue
//! needs a genuine determinant of an n×n Gram matrix, or of a truncation of
//! the limiting operator.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod finite_n;
pub mod fredholm;
pub mod gamma_product;
pub mod limit_laws;
pub mod quad;
pub mod sampler;
pub mod scaling;
pub mod specfun;

pub use error::{Error, Result};

/// Library version, embedded in every CLI output.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
