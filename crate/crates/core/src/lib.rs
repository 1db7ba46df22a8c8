//! Probabilistic relational matrix factorization.
//!
//! Jointly learns user/item latent factors and a sparse user-dependency
//! precision matrix `Θ` by alternating SGD over observed ratings with an
//! ADMM solve for `Θ`.
//!
//! Modules follow the training pipeline: [`ingest`] parses and splits
//! datasets, [`prior`] builds the prior covariance `Σ`, [`sgd`] runs the
//! latent-factor phase, [`precision`] runs the `Θ` phase and
//! [`evaluation`] drives the outer loop and computes metrics.

pub mod domain;
pub mod error;
pub mod evaluation;
pub mod ingest;
pub mod precision;
pub mod prior;
pub mod rng;
pub mod sgd;

pub use domain::{
    FactorMatrix, HyperParams, PrecisionMatrix, PriorCovariance, Rating, RatingRange,
    SparseRatings, SymmetricSparse,
};
pub use error::{Error, Result};
