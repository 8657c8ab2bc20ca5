//! Pool-based active learning with importance-sampled querying.
//!
//! The toolkit centers on a probabilistic query rule: score every unlabeled
//! point with the current model's pseudo-loss (the loss at the label the
//! model would get most wrong), query with probability proportional to the
//! square root of that score, and retrain on the acquired labels weighted by
//! inverse probability. The [`bounds`] module carries the quantities that
//! justify the rule — the weighted pseudo-loss sum `M_p`, its confidence
//! constant `c_δ`, and Monte Carlo machinery that checks the estimator's
//! unbiasedness, variance, and concentration empirically.
//!
//! Modules:
//! - [`dataset`]: dense datasets, CSV/LIBSVM ingestion, synthetic generators,
//!   stratified splits.
//! - [`model`]: linear scorers, margin losses, the weighted-ERM trainer.
//! - [`pool`]: labeled/unlabeled index bookkeeping.
//! - [`sampling`]: pseudo-labels and -losses, query distributions, the
//!   seeded categorical sampler.
//! - [`bounds`]: bound quantities and the estimator simulator.
//! - [`engine`]: the query loop and its per-iteration records.
//!
//! Inner loops run on rayon when the `parallel` feature (default) is on and
//! on plain iterators otherwise; outputs are bit-identical either way.

pub mod bounds;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod exec;
pub mod model;
pub mod pool;
pub mod sampling;

pub use error::{Error, Result};
