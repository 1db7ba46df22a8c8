//! `Θ` phase: an ℓ1-penalized quadratic relaxation of the precision
//! subproblem, solved by ADMM with Woodbury-accelerated `Z` updates and
//! followed by a smaller-magnitude symmetrization.

mod admm;
mod woodbury;

pub use admm::{admm_solve, constant_term, relaxed_objective, AdmmIterationRecord, AdmmOutput, AdmmSettings};
pub use woodbury::{woodbury_apply, WoodburyOperator};

use nalgebra::DMatrix;

use crate::domain::{FactorMatrix, HyperParams, PrecisionMatrix, SymmetricSparse};
use crate::error::{Error, Result};

/// Proximal operator of `λ|·|`. Values inside `[−λ, λ]` map to exactly zero.
#[inline]
pub fn soft_threshold_scalar(a: f64, lambda: f64) -> f64 {
    if a > lambda {
        a - lambda
    } else if a < -lambda {
        a + lambda
    } else {
        0.0
    }
}

pub fn soft_threshold(a: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    a.map(|v| soft_threshold_scalar(v, lambda))
}

pub(crate) fn soft_threshold_in_place(a: &mut DMatrix<f64>, lambda: f64) {
    a.apply(|v| *v = soft_threshold_scalar(*v, lambda));
}

/// Symmetric matrix keeping, for each pair `(i, k)`, the entry of smaller
/// magnitude; ties keep the `(i, k)` entry with `i < k`.
pub fn symmetrize(theta: &DMatrix<f64>) -> Result<PrecisionMatrix> {
    let (m, cols) = theta.shape();
    if m != cols {
        return Err(Error::usage("symmetrize needs a square matrix"));
    }
    let mut entries = Vec::new();
    for i in 0..m {
        for k in i..m {
            let upper = theta[(i, k)];
            let lower = theta[(k, i)];
            let v = if upper.abs() <= lower.abs() { upper } else { lower };
            if v != 0.0 {
                entries.push((i, k, v));
            }
        }
    }
    Ok(PrecisionMatrix::new(SymmetricSparse::from_entries(m, entries)?))
}

/// Augmented factor `Û` with `ÛÛᵀ = (UUᵀ + βXXᵀ)/(d+β)` and the matching `τ = γ/(d+β)`.
pub fn build_u_hat(
    u: &FactorMatrix,
    prior_factor: Option<&FactorMatrix>,
    params: &HyperParams,
) -> Result<(FactorMatrix, f64)> {
    let d = params.dim as f64;
    if params.beta == 0.0 {
        return Ok((u.scaled(1.0 / d.sqrt()), params.gamma / d));
    }
    let x = prior_factor.ok_or_else(|| Error::usage("beta > 0 requires the prior factor X"))?;
    if x.rows() != u.rows() {
        return Err(Error::usage(format!(
            "prior factor has {} rows, U has {}",
            x.rows(),
            u.rows()
        )));
    }
    let denom = d + params.beta;
    let left = u.scaled(1.0 / denom.sqrt());
    let right = x.scaled((params.beta / denom).sqrt());
    Ok((left.hstack(&right)?, params.gamma / denom))
}

pub fn admm_settings(params: &HyperParams, tau: f64) -> Result<AdmmSettings> {
    if !(params.alpha > 0.0) {
        return Err(Error::usage("the theta phase requires alpha > 0"));
    }
    Ok(AdmmSettings {
        tau,
        rho: params.rho,
        iterations: params.admm_iterations,
        shift: params.lambda_u / params.alpha,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThetaDiagnostics {
    pub primal_residual: f64,
    pub nonzeros: usize,
    pub min_entry: f64,
    pub max_entry: f64,
    pub history: Vec<AdmmIterationRecord>,
}

#[derive(Clone, Debug)]
pub struct ThetaPhaseOutput {
    pub theta: PrecisionMatrix,
    pub sparsity: f64,
    pub diagnostics: ThetaDiagnostics,
}

/// One full `Θ` update: build `Û` and `τ`, run ADMM warm-started at
/// `Z⁰ = previous`, then symmetrize.
pub fn theta_phase(
    u: &FactorMatrix,
    prior_factor: Option<&FactorMatrix>,
    params: &HyperParams,
    previous: &PrecisionMatrix,
) -> Result<ThetaPhaseOutput> {
    if previous.size() != u.rows() {
        return Err(Error::usage("previous theta size does not match U"));
    }
    let (u_hat, tau) = build_u_hat(u, prior_factor, params)?;
    let settings = admm_settings(params, tau)?;
    let out = admm_solve(&u_hat, &settings, &previous.to_dense())?;
    let theta = symmetrize(&out.theta)?;
    let (min_entry, max_entry) = theta.value_range().unwrap_or((0.0, 0.0));
    let diagnostics = ThetaDiagnostics {
        primal_residual: out.primal_residual(),
        nonzeros: theta.nnz(),
        min_entry,
        max_entry,
        history: out.history,
    };
    log::info!(
        target: "prmf::theta",
        "primal_residual={:.6e} nnz={} sparsity={:.6} min={:.6e} max={:.6e}",
        diagnostics.primal_residual,
        diagnostics.nonzeros,
        theta.sparsity(),
        min_entry,
        max_entry
    );
    Ok(ThetaPhaseOutput {
        sparsity: theta.sparsity(),
        theta,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn soft_threshold_branches() {
        assert_eq!(soft_threshold_scalar(2.0, 0.5), 1.5);
        assert_eq!(soft_threshold_scalar(0.3, 0.5), 0.0);
        assert_eq!(soft_threshold_scalar(-0.9, 0.5), -0.4);
        assert_eq!(soft_threshold_scalar(-0.5, 0.5), 0.0);
        assert_eq!(soft_threshold_scalar(0.5, 0.5).to_bits(), 0.0f64.to_bits());
    }

    #[test]
    fn symmetrize_examples() {
        let t = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, -0.5, 2.0]);
        let s = symmetrize(&t).unwrap();
        assert_eq!(s.get(0, 1), 0.2);
        assert_eq!(s.get(1, 0), 0.2);

        let t = DMatrix::from_row_slice(2, 2, &[0.0, -0.3, 0.3, 0.0]);
        let s = symmetrize(&t).unwrap();
        assert_eq!(s.get(0, 1), -0.3);
        assert_eq!(s.get(1, 0), -0.3);
        assert_eq!(s.nnz(), 2);

        let sym = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.0, 0.5, 2.0, -1.0, 0.0, -1.0, 3.0]);
        assert_eq!(symmetrize(&sym).unwrap().to_dense(), sym);
    }

    #[test]
    fn u_hat_without_prior_reproduces_scaled_gram() {
        let u = FactorMatrix::from_rows(&[vec![1.0, 2.0], vec![-0.5, 0.25], vec![3.0, 0.0]]).unwrap();
        let params = HyperParams {
            dim: 2,
            gamma: 0.4,
            ..HyperParams::default()
        };
        let (uh, tau) = build_u_hat(&u, None, &params).unwrap();
        assert_eq!(tau, 0.2);
        let uh = uh.to_dmatrix();
        let ud = u.to_dmatrix();
        assert_relative_eq!(&uh * uh.transpose(), (&ud * ud.transpose()) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn u_hat_with_prior_stacks_weighted_blocks() {
        let u = FactorMatrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let x = FactorMatrix::from_rows(&[vec![0.5], vec![-1.0]]).unwrap();
        let params = HyperParams {
            dim: 1,
            beta: 3.0,
            gamma: 2.0,
            ..HyperParams::default()
        };
        let (uh, tau) = build_u_hat(&u, Some(&x), &params).unwrap();
        assert_eq!(tau, 0.5);
        let uh = uh.to_dmatrix();
        let expected = (u.to_dmatrix() * u.to_dmatrix().transpose()
            + 3.0 * x.to_dmatrix() * x.to_dmatrix().transpose())
            / 4.0;
        assert_relative_eq!(&uh * uh.transpose(), expected, epsilon = 1e-12);
        assert!(build_u_hat(&u, None, &params).is_err());
    }

    #[test]
    fn large_threshold_zeroes_everything() {
        let u = FactorMatrix::from_rows(&[vec![0.3, 0.1], vec![-0.2, 0.4], vec![0.1, 0.1]]).unwrap();
        let settings = AdmmSettings {
            tau: 1e6,
            rho: 1.0,
            iterations: 5,
            shift: 0.1,
        };
        let out = admm_solve(&u, &settings, &DMatrix::identity(3, 3)).unwrap();
        assert!(out.theta.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn theta_phase_requires_positive_alpha() {
        let u = FactorMatrix::zeros(2, 1);
        let params = HyperParams {
            dim: 1,
            alpha: 0.0,
            ..HyperParams::default()
        };
        assert!(theta_phase(&u, None, &params, &PrecisionMatrix::identity(2)).is_err());
    }
}
