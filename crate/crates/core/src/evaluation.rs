//! Held-out metrics, the alternating training driver, hyperparameter
//! selection and the `γ` sweep.

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::domain::{
    dot, latent_objective, prmf_objective, FactorMatrix, HyperParams, PrecisionMatrix,
    RatingRange, SparseRatings,
};
use crate::error::{Error, Result};
use crate::precision::theta_phase;
use crate::prior::Prior;
use crate::sgd::{init_factors, run_latent_phase, EpochSchedule};

/// Root-mean-square error over `(predicted, actual)` pairs.
pub fn rmse(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::usage("RMSE of an empty prediction list"));
    }
    let sse: f64 = pairs.iter().map(|(p, a)| (p - a) * (p - a)).sum();
    Ok((sse / pairs.len() as f64).sqrt())
}

/// Mean absolute error over `(predicted, actual)` pairs.
pub fn mae(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::usage("MAE of an empty prediction list"));
    }
    Ok(pairs.iter().map(|(p, a)| (p - a).abs()).sum::<f64>() / pairs.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub rmse: f64,
    pub mae: f64,
    pub num_test_ratings: usize,
    /// Predictions that fell back to the global training mean because the
    /// user or item had no training ratings.
    pub cold_start_fallbacks: usize,
    pub fingerprint: String,
}

/// Trained parameters plus what is needed to score unseen pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub u: FactorMatrix,
    pub v: FactorMatrix,
    pub theta: PrecisionMatrix,
    pub global_mean: f64,
    pub user_seen: Vec<bool>,
    pub item_seen: Vec<bool>,
    pub range: RatingRange,
}

impl Model {
    fn new(
        train: &SparseRatings,
        u: FactorMatrix,
        v: FactorMatrix,
        theta: PrecisionMatrix,
        range: RatingRange,
    ) -> Self {
        Model {
            global_mean: train.mean().unwrap_or(0.5 * (range.min + range.max)),
            user_seen: train.user_counts().into_iter().map(|c| c > 0).collect(),
            item_seen: train.item_counts().into_iter().map(|c| c > 0).collect(),
            u,
            v,
            theta,
            range,
        }
    }

    /// Clamped prediction and whether it fell back to the global mean.
    pub fn predict(&self, user: usize, item: usize) -> (f64, bool) {
        if self.user_seen.get(user) == Some(&true) && self.item_seen.get(item) == Some(&true) {
            (
                self.range.clamp(dot(self.u.row(user), self.v.row(item))),
                false,
            )
        } else {
            (self.range.clamp(self.global_mean), true)
        }
    }

    pub fn evaluate(&self, test: &SparseRatings, fingerprint: &str) -> Result<MetricReport> {
        let mut fallbacks = 0;
        let pairs: Vec<(f64, f64)> = test
            .triples()
            .iter()
            .map(|r| {
                let (p, cold) = self.predict(r.user, r.item);
                fallbacks += cold as usize;
                (p, r.value)
            })
            .collect();
        Ok(MetricReport {
            rmse: rmse(&pairs)?,
            mae: mae(&pairs)?,
            num_test_ratings: pairs.len(),
            cold_start_fallbacks: fallbacks,
            fingerprint: fingerprint.to_string(),
        })
    }
}

/// Summary of one outer iteration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Latent-phase objective at the end of the SGD phase.
    pub latent_objective: f64,
    /// Joint objective after the `Θ` phase; `None` when `Θ + (λu/α)I`
    /// was not positive definite or tracking was disabled.
    pub joint_objective: Option<f64>,
    pub validation_rmse: Option<f64>,
    pub validation_mae: Option<f64>,
    pub sparsity: f64,
    pub primal_residual: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the iteration with the lowest validation RMSE (the final
    /// iteration when there is no validation data).
    pub model: Model,
    pub best_iteration: usize,
    pub trace: Vec<IterationRecord>,
    /// Parameters after the last iteration.
    pub final_model: Model,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainOptions {
    pub shuffle: bool,
    pub decay: f64,
    /// Evaluate the joint objective after every outer iteration.
    pub track_objective: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            shuffle: true,
            decay: 1.0,
            track_objective: true,
        }
    }
}

fn in_phase(phase: &'static str, iteration: usize, e: Error) -> Error {
    Error::Phase {
        phase,
        iteration,
        source: Box::new(e),
    }
}

/// Alternating optimisation with default options. See [`train_prmf_with`].
pub fn train_prmf(
    train: &SparseRatings,
    validation: &SparseRatings,
    prior: Option<&Prior>,
    params: &HyperParams,
) -> Result<TrainOutcome> {
    train_prmf_with(train, validation, prior, params, &TrainOptions::default())
}

/// Alternates `params.epochs` SGD epochs with one `Θ` phase for
/// `params.max_iter` outer iterations, starting from Gaussian factors and
/// `Θ = I`, and keeps the iterate with the best validation RMSE.
///
/// With `alpha == 0` the coupling vanishes, `Θ` is zeroed and the `Θ`
/// phase is skipped (plain PMF).
pub fn train_prmf_with(
    train: &SparseRatings,
    validation: &SparseRatings,
    prior: Option<&Prior>,
    params: &HyperParams,
    options: &TrainOptions,
) -> Result<TrainOutcome> {
    params.validate()?;
    if params.beta > 0.0 && prior.is_none() {
        return Err(Error::usage("beta > 0 requires a prior covariance"));
    }
    if let Some(p) = prior {
        if p.sigma.size() != train.num_users() {
            return Err(Error::usage("prior covariance size does not match the user count"));
        }
    }
    if validation.num_users() != train.num_users() || validation.num_items() != train.num_items() {
        return Err(Error::usage("validation set does not share the training id space"));
    }
    let m = train.num_users();
    let range = params.rating_range();
    let schedule = EpochSchedule::new(params.epochs, params.learning_rate, options.shuffle, options.decay)?;
    let coupled = params.alpha > 0.0;
    let prior_factor = prior.filter(|_| params.beta > 0.0).map(|p| &p.factor);
    let sigma = prior.filter(|_| params.beta > 0.0).map(|p| &p.sigma);

    let (mut u, mut v) = init_factors(m, train.num_items(), params.dim, params.seed);
    let mut theta = if coupled {
        PrecisionMatrix::identity(m)
    } else {
        PrecisionMatrix::zeros(m)
    };

    let mut trace = Vec::with_capacity(params.max_iter);
    let mut best: Option<(f64, usize, Model)> = None;

    for iter in 1..=params.max_iter {
        let phase = run_latent_phase(
            train,
            &mut u,
            &mut v,
            &theta,
            params,
            &schedule,
            (iter - 1) * params.epochs,
        )
        .map_err(|e| in_phase("latent", iter, e))?;
        let latent = phase
            .objective_trace
            .last()
            .copied()
            .unwrap_or(latent_objective(train, &u, &v, &theta, params)?);

        let mut primal_residual = None;
        if coupled {
            let out = theta_phase(&u, prior_factor, params, &theta).map_err(|e| in_phase("theta", iter, e))?;
            primal_residual = Some(out.diagnostics.primal_residual);
            theta = out.theta;
        }

        let joint_objective = if options.track_objective {
            match prmf_objective(train, &u, &v, &theta, sigma, params) {
                Ok(v) => Some(v),
                Err(Error::NumericDomain(msg)) => {
                    log::warn!("outer iteration {iter}: joint objective undefined ({msg})");
                    None
                }
                Err(e) => return Err(e),
            }
        } else {
            None
        };

        let model = Model::new(train, u.clone(), v.clone(), theta.clone(), range);
        let (validation_rmse, validation_mae) = if validation.is_empty() {
            (None, None)
        } else {
            let r = model.evaluate(validation, "")?;
            (Some(r.rmse), Some(r.mae))
        };
        log::info!(
            target: "prmf::train",
            "iteration={} latent_objective={:.6} validation_rmse={:?} sparsity={:.6}",
            iter,
            latent,
            validation_rmse,
            theta.sparsity()
        );
        trace.push(IterationRecord {
            iteration: iter,
            latent_objective: latent,
            joint_objective,
            validation_rmse,
            validation_mae,
            sparsity: theta.sparsity(),
            primal_residual,
        });

        let score = validation_rmse.unwrap_or(f64::NEG_INFINITY);
        let better = match &best {
            None => true,
            Some((s, _, _)) => validation_rmse.is_none() || score < *s,
        };
        if better {
            best = Some((score, iter, model));
        }
    }

    let final_model = Model::new(train, u, v, theta, range);
    let (_, best_iteration, model) = best.expect("max_iter >= 1");
    Ok(TrainOutcome {
        model,
        best_iteration,
        trace,
        final_model,
    })
}

/// Hex SHA-256 over the hyperparameters, a dataset label and the seed.
pub fn config_fingerprint(params: &HyperParams, dataset: &str) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(params).expect("hyperparameters serialize"));
    h.update(b"\0");
    h.update(dataset.as_bytes());
    h.update(params.seed.to_le_bytes());
    hex::encode(&h.finalize()[..16])
}

/// Hex SHA-256 over the contents of rating sets.
pub fn ratings_fingerprint(sets: &[&SparseRatings]) -> String {
    let mut h = Sha256::new();
    for s in sets {
        h.update((s.num_users() as u64).to_le_bytes());
        h.update((s.num_items() as u64).to_le_bytes());
        h.update((s.len() as u64).to_le_bytes());
        for r in s.triples() {
            h.update((r.user as u64).to_le_bytes());
            h.update((r.item as u64).to_le_bytes());
            h.update(r.value.to_le_bytes());
        }
    }
    hex::encode(&h.finalize()[..16])
}

/// Candidate values for validation-based selection. Empty lists keep the
/// base value. `lambdas` sets `λu = λv`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TuningGrid {
    pub lambdas: Vec<f64>,
    pub learning_rates: Vec<f64>,
    pub alphas: Vec<f64>,
}

impl TuningGrid {
    pub fn candidates(&self, base: &HyperParams) -> Vec<HyperParams> {
        let or_base = |v: &Vec<f64>, b: f64| if v.is_empty() { vec![b] } else { v.clone() };
        let mut out = Vec::new();
        for &lambda in &or_base(&self.lambdas, base.lambda_u) {
            for &lr in &or_base(&self.learning_rates, base.learning_rate) {
                for &alpha in &or_base(&self.alphas, base.alpha) {
                    let lambda_v = if self.lambdas.is_empty() { base.lambda_v } else { lambda };
                    out.push(HyperParams {
                        lambda_u: lambda,
                        lambda_v,
                        learning_rate: lr,
                        alpha,
                        ..base.clone()
                    });
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct TuningResult {
    pub best: HyperParams,
    pub best_validation_rmse: f64,
    /// Every candidate with its best validation RMSE, `None` if it diverged.
    pub table: Vec<(HyperParams, Option<f64>)>,
}

/// Trains every grid candidate and picks the lowest best-iterate validation
/// RMSE (first in grid order on ties). Diverging candidates are skipped.
pub fn tune(
    train: &SparseRatings,
    validation: &SparseRatings,
    prior: Option<&Prior>,
    base: &HyperParams,
    grid: &TuningGrid,
    options: &TrainOptions,
) -> Result<TuningResult> {
    if validation.is_empty() {
        return Err(Error::usage("tuning needs a non-empty validation set"));
    }
    let options = TrainOptions {
        track_objective: false,
        ..*options
    };
    let candidates = grid.candidates(base);
    let scores: Vec<Result<Option<f64>>> = candidates
        .par_iter()
        .map(|p| match train_prmf_with(train, validation, prior, p, &options) {
            Ok(out) => Ok(out.trace[out.best_iteration - 1].validation_rmse),
            Err(e) if e.is_divergence() => Ok(None),
            Err(e) => Err(e),
        })
        .collect();
    let mut table = Vec::with_capacity(candidates.len());
    for (p, s) in candidates.into_iter().zip(scores) {
        table.push((p, s?));
    }
    let (best, score) = table
        .iter()
        .filter_map(|(p, s)| s.map(|s| (p, s)))
        .fold(None::<(&HyperParams, f64)>, |acc, (p, s)| match acc {
            Some((_, bs)) if bs <= s => acc,
            _ => Some((p, s)),
        })
        .ok_or_else(|| Error::usage("every tuning candidate diverged"))?;
    Ok(TuningResult {
        best: best.clone(),
        best_validation_rmse: score,
        table,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepMetrics {
    pub sparsity: f64,
    pub rmse: f64,
    pub mae: f64,
    pub best_iteration: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub gamma: f64,
    /// Test metrics, or the error message of a failed run.
    pub outcome: std::result::Result<SweepMetrics, String>,
}

/// One full training run per `γ`, sharing seed and splits. Failed runs are
/// recorded per point and the sweep continues.
pub fn gamma_sweep(
    train: &SparseRatings,
    validation: &SparseRatings,
    test: &SparseRatings,
    prior: Option<&Prior>,
    params: &HyperParams,
    gammas: &[f64],
    options: &TrainOptions,
) -> Result<Vec<SweepPoint>> {
    if gammas.is_empty() {
        return Err(Error::usage("gamma grid is empty"));
    }
    Ok(gammas
        .par_iter()
        .map(|&gamma| {
            let p = HyperParams {
                gamma,
                ..params.clone()
            };
            let outcome = train_prmf_with(train, validation, prior, &p, options)
                .and_then(|out| {
                    let report = out.model.evaluate(test, "")?;
                    Ok(SweepMetrics {
                        sparsity: out.model.theta.sparsity(),
                        rmse: report.rmse,
                        mae: report.mae,
                        best_iteration: out.best_iteration,
                    })
                })
                .map_err(|e| e.to_string());
            SweepPoint { gamma, outcome }
        })
        .collect())
}
