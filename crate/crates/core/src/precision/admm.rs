use nalgebra::DMatrix;

use super::soft_threshold_in_place;
use super::woodbury::WoodburyOperator;
use crate::domain::FactorMatrix;
use crate::error::{Error, Result};

/// Scalars driving one ADMM run on
/// `min_Θ ½tr(ΘᵀCΘ) − tr(EΘ) + τ‖Θ‖₁` with `C = ÛÛᵀ`, `E = I − shift·C`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdmmSettings {
    /// ℓ1 weight `τ`.
    pub tau: f64,
    pub rho: f64,
    pub iterations: usize,
    /// `λu / α`.
    pub shift: f64,
}

/// Per-iteration diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdmmIterationRecord {
    pub iteration: usize,
    /// `‖Θᵗ − Zᵗ‖_F`
    pub primal_residual: f64,
    pub l1_norm: f64,
    pub nonzeros: usize,
}

#[derive(Clone, Debug)]
pub struct AdmmOutput {
    /// Unsymmetrized `Θᴷ`.
    pub theta: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub history: Vec<AdmmIterationRecord>,
}

impl AdmmOutput {
    pub fn primal_residual(&self) -> f64 {
        self.history.last().map_or(0.0, |r| r.primal_residual)
    }
}

/// `E = I − shift · ÛÛᵀ`.
pub fn constant_term(u_hat: &FactorMatrix, shift: f64) -> DMatrix<f64> {
    let m = u_hat.rows();
    let uh = u_hat.to_dmatrix();
    let mut e = DMatrix::identity(m, m);
    e.gemm(-shift, &uh, &uh.transpose(), 1.0);
    e
}

/// Runs exactly `settings.iterations` ADMM iterations from `Z⁰ = z_init`, `Y⁰ = 0`:
///
/// ```text
/// Θᵗ⁺¹ = soft(Zᵗ − Yᵗ, τ/ρ)
/// Zᵗ⁺¹ = (ÛÛᵀ/ρ + I)⁻¹ (E/ρ + Θᵗ⁺¹ + Yᵗ)
/// Yᵗ⁺¹ = Yᵗ + Θᵗ⁺¹ − Zᵗ⁺¹
/// ```
pub fn admm_solve(
    u_hat: &FactorMatrix,
    settings: &AdmmSettings,
    z_init: &DMatrix<f64>,
) -> Result<AdmmOutput> {
    let m = u_hat.rows();
    if z_init.shape() != (m, m) {
        return Err(Error::usage(format!(
            "initial iterate is {:?}, expected {m}x{m}",
            z_init.shape()
        )));
    }
    if settings.iterations == 0 {
        return Err(Error::usage("ADMM needs at least one iteration"));
    }
    if !(settings.tau >= 0.0) {
        return Err(Error::usage(format!("tau must be >= 0, got {}", settings.tau)));
    }
    let op = WoodburyOperator::new(u_hat, settings.rho)?;
    let e_over_rho = constant_term(u_hat, settings.shift) / settings.rho;
    let threshold = settings.tau / settings.rho;

    let mut z = z_init.clone();
    let mut y = DMatrix::<f64>::zeros(m, m);
    let mut theta = DMatrix::<f64>::zeros(m, m);
    let mut history = Vec::with_capacity(settings.iterations);

    for t in 0..settings.iterations {
        theta.copy_from(&z);
        theta -= &y;
        soft_threshold_in_place(&mut theta, threshold);

        let rhs = &e_over_rho + &theta + &y;
        z = op.apply(&rhs)?;

        y += &theta;
        y -= &z;

        let residual = (&theta - &z).norm();
        if !residual.is_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::AdmmDivergence { iteration: t + 1 });
        }
        let record = AdmmIterationRecord {
            iteration: t + 1,
            primal_residual: residual,
            l1_norm: theta.iter().map(|v| v.abs()).sum(),
            nonzeros: theta.iter().filter(|&&v| v != 0.0).count(),
        };
        log::debug!(
            target: "prmf::admm",
            "iteration={} primal_residual={:.6e} l1={:.6e} nnz={}",
            record.iteration,
            record.primal_residual,
            record.l1_norm,
            record.nonzeros
        );
        history.push(record);
    }

    Ok(AdmmOutput {
        theta,
        z,
        y,
        history,
    })
}

/// `½tr(ΘᵀCΘ) − tr(EΘ) + τ‖Θ‖₁` with `C = ÛÛᵀ`, evaluated densely.
///
/// This is the objective whose augmented Lagrangian yields the `Z` update
/// `(C/ρ + I)⁻¹(E/ρ + Θ + Y)`; at `τ = 0` its minimizer satisfies `CΘ = E`.
pub fn relaxed_objective(u_hat: &FactorMatrix, shift: f64, tau: f64, theta: &DMatrix<f64>) -> f64 {
    let uh = u_hat.to_dmatrix();
    let ut_theta = uh.transpose() * theta;
    let quad = 0.5 * ut_theta.norm_squared();
    let e = constant_term(u_hat, shift);
    let linear = (e * theta).trace();
    quad - linear + tau * theta.iter().map(|v| v.abs()).sum::<f64>()
}
