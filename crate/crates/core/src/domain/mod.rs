//! Core numeric types and the objective/prediction functions shared by all
//! training phases.

mod factors;
mod objective;
mod params;
mod ratings;
mod sparse;

pub use factors::{dot, FactorMatrix};
pub use objective::{
    coupling_trace, latent_objective, log_det_spd, pmf_objective, predict, prmf_objective,
    prmf_objective_terms, squared_error_term, ObjectiveTerms,
};
pub use params::{HyperParams, RatingRange};
pub use ratings::{Rating, SparseRatings};
pub use sparse::{PrecisionMatrix, PriorCovariance, SymmetricSparse};
