//! Robust one-shot aggregation of federated ICA estimators.
//!
//! Each client runs a local ICA solver and ships its `r x r` estimate of the
//! shared mixing matrix once. The server resolves the sign ambiguity against a
//! benchmark client, clusters the pooled `K*r` columns with k-means and takes a
//! geometric median inside every cluster.
//!
//! Module map:
//!
//! * [`model_gen`] synthetic federated ICA instances
//! * [`local_solver`] prewhitening and symmetric kurtosis FastICA
//! * [`alignment`] benchmark choice, sign alignment, signed-permutation metric
//! * [`clustering`] atom pool and k-means with restarts
//! * [`robust_agg`] sample quantiles, geometric median, RF-ICA and baselines
//! * [`diagnostics`] error quantities and empirical bound checks
//! * [`experiment`] trial/sweep harness, CSV and binary file formats

// `!(x > t)` rejects NaN along with small values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alignment;
pub mod assignment;
pub mod clustering;
pub mod diagnostics;
mod error;
pub mod experiment;
pub mod local_solver;
pub mod model_gen;
pub mod par;
pub mod robust_agg;
pub mod seed;

pub use error::{Error, Result};

/// Dense column-major matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
