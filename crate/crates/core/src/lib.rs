//! Node harvest: a sparse, interpretable regression and binary classification
//! estimator built from a large set of candidate rules.
//!
//! Candidate rules ("nodes") are harvested from randomized regression trees.
//! Each node is a box in feature space; a prediction is the weighted mean of
//! the training means of all nodes containing the observation. The weights
//! come from a quadratic program that keeps them nonnegative and makes the
//! weights of the nodes containing any training row sum to one, which leaves
//! most weights at exactly zero.
//!
//! ```no_run
//! use nodeharvest::{data, estimator};
//!
//! let ds = data::load_csv("housing.csv", "medv", &Default::default())?;
//! let model = estimator::fit(&ds, &estimator::FitConfig::default())?;
//! println!("{} nodes selected", model.selected_nodes(1e-8).len());
//! # Ok::<(), nodeharvest::Error>(())
//! ```

// `!(x > 0.0)` is used on purpose to reject NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod estimator;
pub mod eval;
pub mod matrices;
pub mod nodegen;
pub mod plot;
pub mod qp;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use estimator::{fit, fit_regularized, FitConfig, HarvestModel, Task};
