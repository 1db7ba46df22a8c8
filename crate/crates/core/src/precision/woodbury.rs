use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::domain::FactorMatrix;
use crate::error::{Error, Result};

/// Applies `(ÛÛᵀ/ρ + I)⁻¹` through the Woodbury identity
///
/// `(ÛÛᵀ/ρ + I)⁻¹ = I − (1/ρ) Û (I + ÛᵀÛ/ρ)⁻¹ Ûᵀ`
///
/// without ever forming an `m x m` matrix. The `r x r` core is factorized
/// once at construction and reused for every application.
#[derive(Clone, Debug)]
pub struct WoodburyOperator {
    u_hat: DMatrix<f64>,
    u_hat_t: DMatrix<f64>,
    core: Cholesky<f64, Dyn>,
    rho: f64,
}

impl WoodburyOperator {
    pub fn new(u_hat: &FactorMatrix, rho: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::usage(format!("rho must be > 0, got {rho}")));
        }
        let u_hat = u_hat.to_dmatrix();
        let u_hat_t = u_hat.transpose();
        let r = u_hat.ncols();
        let core = DMatrix::identity(r, r) + (&u_hat_t * &u_hat) / rho;
        let core = core.cholesky().ok_or_else(|| {
            Error::NumericDomain(
                "Woodbury core I + ÛᵀÛ/ρ is not positive definite (non-finite Û?)".into(),
            )
        })?;
        Ok(WoodburyOperator {
            u_hat,
            u_hat_t,
            core,
            rho,
        })
    }

    pub fn size(&self) -> usize {
        self.u_hat.nrows()
    }

    pub fn rank(&self) -> usize {
        self.u_hat.ncols()
    }

    pub fn apply(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if m.nrows() != self.size() {
            return Err(Error::usage(format!(
                "operand has {} rows, operator expects {}",
                m.nrows(),
                self.size()
            )));
        }
        let projected = &self.u_hat_t * m;
        let solved = self.core.solve(&projected);
        let mut out = m.clone();
        out.gemm(-1.0 / self.rho, &self.u_hat, &solved, 1.0);
        Ok(out)
    }
}

/// One-shot `(ÛÛᵀ/ρ + I)⁻¹ · M`.
pub fn woodbury_apply(u_hat: &FactorMatrix, rho: f64, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    WoodburyOperator::new(u_hat, rho)?.apply(m)
}
