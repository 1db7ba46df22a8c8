use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed interval predictions are clamped to at evaluation time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingRange {
    pub min: f64,
    pub max: f64,
}

impl RatingRange {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min < max) {
            return Err(Error::usage(format!("invalid rating range [{min}, {max}]")));
        }
        Ok(RatingRange { min, max })
    }

    #[inline]
    pub fn clamp(&self, value: f64) -> f64 {
        value.clamp(self.min, self.max)
    }
}

/// Every scalar knob of the model and its optimizer.
///
/// `lambda_u`, `lambda_v` and `alpha` are the reparameterized weights
/// (`σ²/σu²`, `σ²/σv²`, `σ²`); the variances themselves are never stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParams {
    /// Latent dimensionality `d`.
    pub dim: usize,
    pub lambda_u: f64,
    pub lambda_v: f64,
    /// Weight of the user-dependency (matrix-variate) term.
    pub alpha: f64,
    /// Weight of the prior covariance `Σ`.
    pub beta: f64,
    /// ℓ1 sparsity weight on `Θ`.
    pub gamma: f64,
    /// SGD step size.
    pub learning_rate: f64,
    /// ADMM penalty.
    pub rho: f64,
    /// SGD epochs per outer iteration.
    pub epochs: usize,
    /// ADMM iterations per outer iteration.
    pub admm_iterations: usize,
    /// Outer (alternating) iterations.
    pub max_iter: usize,
    pub seed: u64,
    pub rating_min: f64,
    pub rating_max: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            dim: 10,
            lambda_u: 0.01,
            lambda_v: 0.01,
            alpha: 0.125,
            beta: 0.0,
            gamma: 1e-4,
            learning_rate: 0.01,
            rho: 100.0,
            epochs: 30,
            admm_iterations: 30,
            max_iter: 10,
            seed: 0,
            rating_min: 1.0,
            rating_max: 5.0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("lambda_u", self.lambda_u),
            ("lambda_v", self.lambda_v),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ];
        for (name, w) in weights {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::usage(format!("{name} must be finite and >= 0, got {w}")));
            }
        }
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::usage(format!("rho must be > 0, got {}", self.rho)));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::usage(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.dim == 0 {
            return Err(Error::usage("dim must be >= 1"));
        }
        if self.epochs == 0 || self.admm_iterations == 0 || self.max_iter == 0 {
            return Err(Error::usage(
                "epochs, admm_iterations and max_iter must all be >= 1",
            ));
        }
        RatingRange::new(self.rating_min, self.rating_max)?;
        Ok(())
    }

    pub fn rating_range(&self) -> RatingRange {
        RatingRange {
            min: self.rating_min,
            max: self.rating_max,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        HyperParams::default().validate().unwrap();
    }

    #[test]
    fn rejects_each_invalid_knob() {
        let base = HyperParams::default();
        let bad = [
            HyperParams { lambda_u: -1.0, ..base.clone() },
            HyperParams { gamma: f64::NAN, ..base.clone() },
            HyperParams { rho: 0.0, ..base.clone() },
            HyperParams { dim: 0, ..base.clone() },
            HyperParams { admm_iterations: 0, ..base.clone() },
            HyperParams { rating_min: 5.0, ..base.clone() },
        ];
        for p in bad {
            assert!(p.validate().is_err(), "{p:?}");
        }
    }
}
