//! Subcommand implementations. Each returns its results so that callers
//! (the binary and the tests) can inspect them without re-reading files.
//!
//! ```text
//! <output_dir>/prepared/...                     see [`crate::data`]
//! <output_dir>/<method>/effective-config.toml
//! <output_dir>/<method>/reports.csv reports.txt timings.csv tuning.csv
//! <output_dir>/<method>/seed-<s>/model.ckpt trace.csv
//! <output_dir>/<method>/evaluation.csv
//! <output_dir>/<method>/sweep/sweep.csv sweep.jsonl
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use prmf_core::evaluation::{config_fingerprint, gamma_sweep, train_prmf_with, tune, SweepPoint, TrainOptions};
use prmf_core::HyperParams;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::data::{self, PreparedSeed};
use crate::error::{CliError, Result};
use crate::report::{self, ReportRow, TimingRow};

pub fn seed_run_dir(cfg: &RunConfig, seed: u64) -> PathBuf {
    cfg.method_dir().join(format!("seed-{seed}"))
}

pub fn checkpoint_path(cfg: &RunConfig, seed: u64) -> PathBuf {
    seed_run_dir(cfg, seed).join("model.ckpt")
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Identifies a trained model: hyperparameters, dataset label and split contents.
fn run_fingerprint(cfg: &RunConfig, params: &HyperParams, split_fingerprint: &str) -> String {
    config_fingerprint(params, &format!("{}:{}:{}", cfg.data.name, cfg.method, split_fingerprint))
}

pub fn cmd_prepare(cfg: &RunConfig) -> Result<Vec<PreparedSeed>> {
    with_pool(cfg.jobs, || data::prepare(cfg))?
}

/// Picks λ, learning rate and α on the first seed's validation split when a
/// tuning grid is configured, and returns the parameters to train with.
fn tuned_params(cfg: &RunConfig, options: &TrainOptions) -> Result<HyperParams> {
    let Some(tuning) = &cfg.tuning else {
        return Ok(cfg.params.clone());
    };
    let seed = cfg.seeds[0];
    let prepared = data::load_split(cfg, seed)?;
    let prior = data::load_prior(cfg, &prepared)?;
    let s = &prepared.split;
    let result = tune(&s.train, &s.validation, prior.as_ref(), &cfg.params_for_seed(seed), &tuning.grid(), options)?;
    report::write_tuning(&cfg.method_dir().join("tuning.csv"), &result)?;
    log::info!(
        "tuning selected lambda={} learning_rate={} alpha={} (validation rmse {:.4})",
        result.best.lambda_u,
        result.best.learning_rate,
        result.best.alpha,
        result.best_validation_rmse
    );
    Ok(HyperParams {
        seed: cfg.params.seed,
        ..result.best
    })
}

struct SeedRun {
    row: ReportRow,
    seconds: f64,
}

fn train_seed(cfg: &RunConfig, base: &HyperParams, seed: u64, options: &TrainOptions) -> Result<SeedRun> {
    let start = Instant::now();
    let prepared = data::load_split(cfg, seed)?;
    let prior = data::load_prior(cfg, &prepared)?;
    let params = HyperParams { seed, ..base.clone() };
    let s = &prepared.split;
    let out = train_prmf_with(&s.train, &s.validation, prior.as_ref(), &params, options)?;
    let fingerprint = run_fingerprint(cfg, &params, &prepared.fingerprint);
    let metrics = out.model.evaluate(&s.test, &fingerprint)?;

    let dir = seed_run_dir(cfg, seed);
    create_dir(&dir)?;
    report::write_trace(&dir.join("trace.csv"), &out.trace)?;
    let sparsity = out.model.theta.sparsity();
    Checkpoint {
        model: out.model,
        ids: prepared.split.ids.clone(),
        params: params.clone(),
        fingerprint,
        best_iteration: out.best_iteration,
    }
    .save(&dir.join("model.ckpt"))?;
    log::info!(
        "{} seed {seed}: test rmse={:.4} mae={:.4} best_iteration={}",
        cfg.method,
        metrics.rmse,
        metrics.mae,
        out.best_iteration
    );
    Ok(SeedRun {
        row: ReportRow::new(&cfg.data.name, cfg.method, &params, out.best_iteration, sparsity, &metrics),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Prepares data if needed, optionally tunes, trains every seed and writes
/// checkpoints, traces and reports. Rows come back in seed order.
pub fn cmd_train(cfg: &RunConfig) -> Result<Vec<ReportRow>> {
    cmd_prepare(cfg)?;
    let dir = cfg.method_dir();
    create_dir(&dir)?;
    let effective = dir.join("effective-config.toml");
    fs::write(&effective, cfg.to_toml()?).map_err(|e| CliError::io(&effective, e))?;

    let options = TrainOptions::from(cfg.training);
    let runs = with_pool(cfg.jobs, || -> Result<Vec<SeedRun>> {
        let base = tuned_params(cfg, &options)?;
        cfg.seeds
            .par_iter()
            .map(|&seed| train_seed(cfg, &base, seed, &options))
            .collect()
    })??;

    let rows: Vec<ReportRow> = runs.iter().map(|r| r.row.clone()).collect();
    report::write_reports(&dir, &rows)?;
    report::write_csv(
        &dir.join("timings.csv"),
        runs.iter().map(|r| TimingRow {
            method: cfg.method.to_string(),
            seed: r.row.seed,
            seconds: r.seconds,
        }),
    )?;
    Ok(rows)
}

/// Reloads each seed's checkpoint and scores it on the prepared test split.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<Vec<ReportRow>> {
    let rows = with_pool(cfg.jobs, || -> Result<Vec<ReportRow>> {
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                let path = checkpoint_path(cfg, seed);
                let ckpt = Checkpoint::load(&path)?;
                let prepared = data::load_split(cfg, seed)?;
                if ckpt.ids != prepared.split.ids {
                    return Err(CliError::Checkpoint {
                        path,
                        message: "id tables differ from the prepared split".into(),
                    });
                }
                let metrics = ckpt.model.evaluate(&prepared.split.test, &ckpt.fingerprint)?;
                Ok(ReportRow::new(
                    &cfg.data.name,
                    cfg.method,
                    &ckpt.params,
                    ckpt.best_iteration,
                    ckpt.model.theta.sparsity(),
                    &metrics,
                ))
            })
            .collect()
    })??;
    let dir = cfg.method_dir();
    create_dir(&dir)?;
    report::write_csv(&dir.join("evaluation.csv"), &rows)?;
    Ok(rows)
}

/// Trains one model per `γ` in the sweep grid for every seed.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<Vec<(u64, Vec<SweepPoint>)>> {
    if cfg.sweep.gammas.is_empty() {
        return Err(CliError::Config("gamma grid is empty".into()));
    }
    cmd_prepare(cfg)?;
    let options = TrainOptions::from(cfg.training);
    let results = with_pool(cfg.jobs, || -> Result<Vec<(u64, Vec<SweepPoint>)>> {
        cfg.seeds
            .iter()
            .map(|&seed| {
                let prepared = data::load_split(cfg, seed)?;
                let prior = data::load_prior(cfg, &prepared)?;
                let s = &prepared.split;
                let points = gamma_sweep(
                    &s.train,
                    &s.validation,
                    &s.test,
                    prior.as_ref(),
                    &cfg.params_for_seed(seed),
                    &cfg.sweep.gammas,
                    &options,
                )?;
                for p in &points {
                    match &p.outcome {
                        Ok(m) => log::info!("seed {seed} gamma={}: sparsity={:.4} rmse={:.4}", p.gamma, m.sparsity, m.rmse),
                        Err(e) => log::warn!("seed {seed} gamma={}: failed: {e}", p.gamma),
                    }
                }
                Ok((seed, points))
            })
            .collect()
    })??;
    let dir = cfg.method_dir().join("sweep");
    create_dir(&dir)?;
    report::write_sweep(&dir, &results)?;
    Ok(results)
}
