//! Automatic Bayesian cubature with matched node sets and kernels.
//!
//! Shifted rank-1 lattices pair with shift-invariant kernels and the FFT;
//! digitally shifted Sobol' nets pair with Walsh kernels and the fast
//! Walsh-Hadamard transform. With either pairing the Gram matrix is
//! diagonalized by the transform, so hyperparameter search and the
//! credible-interval stopping rule cost `O(n log n)` per evaluation.

pub mod bench;
pub mod cubature;
pub mod data;
pub mod error;
pub mod inference;
pub mod kernels;
pub mod linalg;
pub mod nodes;
pub mod problems;
mod rng;
pub mod selftest;
pub mod special;
pub mod transforms;

pub use error::{Error, Result};
pub use rng::log_uniform_draws;
