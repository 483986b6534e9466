//! Representational similarity between models and its consistency across
//! datasets.
//!
//! * [`math`]: Gram matrices, HSIC, CKA (linear, RBF, streaming), RDMs, RSA,
//!   Pearson and Spearman correlation.
//! * [`store`]: NPY embedding files, model/dataset registries and seeded
//!   subsampling.
//! * [`analysis`]: similarity vectors and matrices, cross-dataset
//!   consistency, aggregate statistics, clustering order and the sampling
//!   stability harnesses.
//! * [`probe`]: linear-probe training and evaluation, and the correlation
//!   between performance gaps and similarity.
//! * [`pipeline`]: configuration, task planning and report emission behind
//!   the `repsim` binary.

pub mod error;
pub mod math;
pub mod store;
pub mod analysis;
pub mod pipeline;
pub mod probe;

pub use error::{Error, ErrorClass, Result};
