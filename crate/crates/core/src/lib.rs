//! Rare-event failure probability estimation over factorized categorical
//! input spaces.
//!
//! The pipeline: define a parameter space (template-backed or synthetic),
//! query a black-box failure oracle, learn a failure-prone proposal by
//! cross-entropy iteration, then estimate the failure probability under the
//! uniform distribution with defensive importance sampling and normal-theory
//! confidence bounds. A Clopper-Pearson exact interval provides the uniform
//! baseline, and the analysis layer covers failure-concentration metrics,
//! coverage verification, Pareto frontiers, and sampling-efficiency gains.

// Published approximation constants keep their full printed precision, and
// float validations use the negated-comparison form so NaN inputs fail them.
#![allow(clippy::excessive_precision)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod analysis;
pub mod answer;
pub mod cem;
pub mod error;
pub mod estimator;
pub mod exec;
pub mod expr;
pub mod oracle;
pub mod proposal;
pub mod report;
pub mod rng;
pub mod space;
pub mod stats;
pub mod synth;
pub mod template;

pub use error::{Error, Result};
