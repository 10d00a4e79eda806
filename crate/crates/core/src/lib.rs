//! Exact and Monte Carlo computations for a nearest-neighbour random walk
//! whose sojourn times are generated by an intermittent (neutral fixed point)
//! dynamical environment.
//!
//! * [`environment`] builds the per-site tail sequences and their diagnostics.
//! * [`random_env`] samples quenched environments from stationary mixing models.
//! * [`walk`] computes sojourn, hitting-time and position laws, and samples paths.
//! * [`dynsys`] iterates the extended piecewise-linear map.
//! * [`limits`] evaluates the law-of-large-numbers, central and local limit predictions.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dist;
pub mod dynsys;
pub mod environment;
pub mod error;
pub mod json;
pub mod limits;
pub mod numeric;
pub mod random_env;
pub mod rng;
pub mod stats;
pub mod walk;

pub use dist::DiscreteDistribution;
pub use environment::{Environment, TailSequence, Truncation};
pub use error::{Error, ErrorKind, Result};
