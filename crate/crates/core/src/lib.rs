// NaN-rejecting checks are written as negated comparisons on purpose, and
// the eigenvalue routines keep the index form of their reference algorithms.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod autoencoders;
pub mod data;
pub mod error;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod propagators;
pub mod rollout;
pub mod rng;
pub mod surrogate;
pub mod training;

pub use error::{Error, Result};
pub use linalg::Matrix;
