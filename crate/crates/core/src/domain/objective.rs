//! Prediction and objective evaluation shared by every training phase.

use nalgebra::DMatrix;

use super::factors::{dot, FactorMatrix};
use super::params::{HyperParams, RatingRange};
use super::ratings::SparseRatings;
use super::sparse::{PrecisionMatrix, PriorCovariance};
use crate::error::{Error, Result};

/// Inner-product rating estimate, optionally clamped into `clamp`.
pub fn predict(user_row: &[f64], item_row: &[f64], clamp: Option<RatingRange>) -> Result<f64> {
    if user_row.len() != item_row.len() {
        return Err(Error::usage(format!(
            "factor length mismatch: {} vs {}",
            user_row.len(),
            item_row.len()
        )));
    }
    let raw = dot(user_row, item_row);
    Ok(match clamp {
        Some(range) => range.clamp(raw),
        None => raw,
    })
}

fn check_factors(ratings: &SparseRatings, u: &FactorMatrix, v: &FactorMatrix) -> Result<()> {
    if u.dim() != v.dim() {
        return Err(Error::usage(format!(
            "user dim {} != item dim {}",
            u.dim(),
            v.dim()
        )));
    }
    if u.rows() != ratings.num_users() || v.rows() != ratings.num_items() {
        return Err(Error::usage(format!(
            "factors {}x{} / {}x{} do not cover a {}x{} rating matrix",
            u.rows(),
            u.dim(),
            v.rows(),
            v.dim(),
            ratings.num_users(),
            ratings.num_items()
        )));
    }
    Ok(())
}

/// Half the squared residual summed over observed ratings only.
pub fn squared_error_term(ratings: &SparseRatings, u: &FactorMatrix, v: &FactorMatrix) -> f64 {
    0.5 * ratings
        .triples()
        .iter()
        .map(|r| {
            let e = r.value - dot(u.row(r.user), v.row(r.item));
            e * e
        })
        .sum::<f64>()
}

/// `½ Σ_D (R_ij − U_i V_jᵀ)² + λu/2 ‖U‖² + λv/2 ‖V‖²`.
pub fn pmf_objective(
    ratings: &SparseRatings,
    u: &FactorMatrix,
    v: &FactorMatrix,
    lambda_u: f64,
    lambda_v: f64,
) -> Result<f64> {
    check_factors(ratings, u, v)?;
    Ok(squared_error_term(ratings, u, v)
        + 0.5 * lambda_u * u.frobenius_sq()
        + 0.5 * lambda_v * v.frobenius_sq())
}

/// `tr(Θ U Uᵀ) = Σ_ik Θ_ik U_i·U_k`, touching only the nonzeros of `Θ`.
pub fn coupling_trace(theta: &PrecisionMatrix, u: &FactorMatrix) -> f64 {
    theta
        .entries()
        .iter()
        .map(|&(i, k, t)| {
            let s = t * dot(u.row(i), u.row(k));
            if i == k {
                s
            } else {
                2.0 * s
            }
        })
        .sum()
}

/// Objective of the latent-factor phase (`Θ` fixed):
/// the PMF objective plus `α/2 · tr(Uᵀ Θ U)`.
pub fn latent_objective(
    ratings: &SparseRatings,
    u: &FactorMatrix,
    v: &FactorMatrix,
    theta: &PrecisionMatrix,
    params: &HyperParams,
) -> Result<f64> {
    let base = pmf_objective(ratings, u, v, params.lambda_u, params.lambda_v)?;
    if params.alpha == 0.0 {
        return Ok(base);
    }
    check_theta(theta, u)?;
    Ok(base + 0.5 * params.alpha * coupling_trace(theta, u))
}

fn check_theta(theta: &PrecisionMatrix, u: &FactorMatrix) -> Result<()> {
    if theta.size() != u.rows() {
        return Err(Error::usage(format!(
            "theta is {0}x{0} but U has {1} rows",
            theta.size(),
            u.rows()
        )));
    }
    Ok(())
}

/// `log |A|` of a symmetric positive-definite matrix via Cholesky.
pub fn log_det_spd(a: DMatrix<f64>) -> Result<f64> {
    let chol = a.cholesky().ok_or_else(|| {
        Error::NumericDomain("matrix is not positive definite; log-determinant undefined".into())
    })?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

/// Individual terms of the full joint objective, each already weighted.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ObjectiveTerms {
    /// `½ Σ_D residual²`
    pub squared_error: f64,
    /// `λu/2 ‖U‖²`
    pub user_penalty: f64,
    /// `λv/2 ‖V‖²`
    pub item_penalty: f64,
    /// `α/2 · tr(Θ(UUᵀ + βΣ))`
    pub trace: f64,
    /// `−α/2 · (d+β) · log|Θ + (λu/α) I|`
    pub log_det: f64,
    /// `α/2 · γ ‖Θ‖₁`
    pub sparsity: f64,
}

impl ObjectiveTerms {
    pub fn pmf_part(&self) -> f64 {
        self.squared_error + self.user_penalty + self.item_penalty
    }

    pub fn total(&self) -> f64 {
        self.pmf_part() + self.trace + self.log_det + self.sparsity
    }
}

/// Term-by-term evaluation of the joint objective over `(U, V, Θ)`.
///
/// With `alpha == 0` the dependency bracket vanishes and only the PMF
/// terms are returned. `sigma` may be omitted when `beta == 0`.
pub fn prmf_objective_terms(
    ratings: &SparseRatings,
    u: &FactorMatrix,
    v: &FactorMatrix,
    theta: &PrecisionMatrix,
    sigma: Option<&PriorCovariance>,
    params: &HyperParams,
) -> Result<ObjectiveTerms> {
    check_factors(ratings, u, v)?;
    let mut terms = ObjectiveTerms {
        squared_error: squared_error_term(ratings, u, v),
        user_penalty: 0.5 * params.lambda_u * u.frobenius_sq(),
        item_penalty: 0.5 * params.lambda_v * v.frobenius_sq(),
        ..Default::default()
    };
    if params.alpha == 0.0 {
        return Ok(terms);
    }
    check_theta(theta, u)?;

    let mut trace = coupling_trace(theta, u);
    if params.beta > 0.0 {
        let sigma = sigma.ok_or_else(|| Error::usage("beta > 0 requires a prior covariance"))?;
        if sigma.size() != theta.size() {
            return Err(Error::usage("prior covariance size does not match theta"));
        }
        let cross: f64 = theta
            .entries()
            .iter()
            .map(|&(i, k, t)| {
                let s = t * sigma.get(i, k);
                if i == k {
                    s
                } else {
                    2.0 * s
                }
            })
            .sum();
        trace += params.beta * cross;
    }

    let mut shifted = theta.to_dense();
    let shift = params.lambda_u / params.alpha;
    for i in 0..shifted.nrows() {
        shifted[(i, i)] += shift;
    }
    let log_det = log_det_spd(shifted)?;

    let half_alpha = 0.5 * params.alpha;
    terms.trace = half_alpha * trace;
    terms.log_det = -half_alpha * (params.dim as f64 + params.beta) * log_det;
    terms.sparsity = half_alpha * params.gamma * theta.l1_norm();
    Ok(terms)
}

/// Scalar value of the joint objective. Fails with a numeric-domain error
/// when `Θ + (λu/α) I` is not positive definite.
pub fn prmf_objective(
    ratings: &SparseRatings,
    u: &FactorMatrix,
    v: &FactorMatrix,
    theta: &PrecisionMatrix,
    sigma: Option<&PriorCovariance>,
    params: &HyperParams,
) -> Result<f64> {
    prmf_objective_terms(ratings, u, v, theta, sigma, params).map(|t| t.total())
}
