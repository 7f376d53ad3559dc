//! Functional data analysis of yearly count trajectories.

// Index loops read best in the matrix kernels, and `!(x > 0.0)` is used on
// purpose so that NaN is rejected too.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cluster;
pub mod data;
pub mod error;
pub mod exec;
pub mod fpca;
pub mod linalg;
pub mod optim;
pub mod pipeline;
pub mod poisson;
pub mod rng;
pub mod smoothing;
pub mod synth;
pub mod wsb;

pub use error::{Error, ErrorKind, Result};
pub use exec::Execution;
