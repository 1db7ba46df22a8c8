//! CSV, JSON-lines and text outputs.
//!
//! Everything written here is a pure function of the results, so two runs
//! with the same configuration produce byte-identical files. Wall-clock
//! times go to a separate `timings.csv`.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use prmf_core::evaluation::{IterationRecord, MetricReport, SweepPoint, TuningResult};
use prmf_core::HyperParams;

use crate::config::Method;
use crate::error::{CliError, Result};

/// One row of `reports.csv`; field order is the column order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub dataset: String,
    pub method: String,
    pub seed: u64,
    pub dim: usize,
    pub lambda_u: f64,
    pub lambda_v: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub learning_rate: f64,
    pub rho: f64,
    pub epochs: usize,
    pub admm_iterations: usize,
    pub max_iter: usize,
    pub best_iteration: usize,
    pub rmse: f64,
    pub mae: f64,
    pub sparsity: f64,
    pub num_test_ratings: usize,
    pub cold_start_fallbacks: usize,
    pub fingerprint: String,
}

impl ReportRow {
    pub fn new(
        dataset: &str,
        method: Method,
        params: &HyperParams,
        best_iteration: usize,
        sparsity: f64,
        metrics: &MetricReport,
    ) -> Self {
        ReportRow {
            dataset: dataset.to_string(),
            method: method.to_string(),
            seed: params.seed,
            dim: params.dim,
            lambda_u: params.lambda_u,
            lambda_v: params.lambda_v,
            alpha: params.alpha,
            beta: params.beta,
            gamma: params.gamma,
            learning_rate: params.learning_rate,
            rho: params.rho,
            epochs: params.epochs,
            admm_iterations: params.admm_iterations,
            max_iter: params.max_iter,
            best_iteration,
            rmse: metrics.rmse,
            mae: metrics.mae,
            sparsity,
            num_test_ratings: metrics.num_test_ratings,
            cold_start_fallbacks: metrics.cold_start_fallbacks,
            fingerprint: metrics.fingerprint.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimingRow {
    pub method: String,
    pub seed: u64,
    pub seconds: f64,
}

#[derive(Serialize)]
struct TuningRow {
    lambda: f64,
    learning_rate: f64,
    alpha: f64,
    validation_rmse: Option<f64>,
    selected: bool,
}

#[derive(Serialize)]
struct SweepRow<'a> {
    seed: u64,
    gamma: f64,
    sparsity: Option<f64>,
    rmse: Option<f64>,
    mae: Option<f64>,
    best_iteration: Option<usize>,
    error: Option<&'a str>,
}

fn sweep_rows(seed: u64, points: &[SweepPoint]) -> impl Iterator<Item = SweepRow<'_>> {
    points.iter().map(move |p| match &p.outcome {
        Ok(m) => SweepRow {
            seed,
            gamma: p.gamma,
            sparsity: Some(m.sparsity),
            rmse: Some(m.rmse),
            mae: Some(m.mae),
            best_iteration: Some(m.best_iteration),
            error: None,
        },
        Err(e) => SweepRow {
            seed,
            gamma: p.gamma,
            sparsity: None,
            rmse: None,
            mae: None,
            best_iteration: None,
            error: Some(e),
        },
    })
}

pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_trace(path: &Path, trace: &[IterationRecord]) -> Result<()> {
    write_csv(path, trace)
}

pub fn write_tuning(path: &Path, result: &TuningResult) -> Result<()> {
    write_csv(
        path,
        result.table.iter().map(|(p, score)| TuningRow {
            lambda: p.lambda_u,
            learning_rate: p.learning_rate,
            alpha: p.alpha,
            validation_rmse: *score,
            selected: p == &result.best,
        }),
    )
}

/// Writes `sweep.csv` and `sweep.jsonl` for all seeds, in seed order.
pub fn write_sweep(dir: &Path, results: &[(u64, Vec<SweepPoint>)]) -> Result<()> {
    let rows = || results.iter().flat_map(|(seed, pts)| sweep_rows(*seed, pts));
    write_csv(&dir.join("sweep.csv"), rows())?;
    let mut jsonl = Vec::new();
    for row in rows() {
        serde_json::to_writer(&mut jsonl, &row).expect("sweep row serializes");
        jsonl.push(b'\n');
    }
    let path = dir.join("sweep.jsonl");
    fs::write(&path, jsonl).map_err(|e| CliError::io(&path, e))
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-seed table followed by mean ± standard deviation.
pub fn summary_text(rows: &[ReportRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<10} {:<10} {:>6} {:>9} {:>9} {:>9} {:>5}", "dataset", "method", "seed", "rmse", "mae", "sparsity", "best");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<10} {:<10} {:>6} {:>9.4} {:>9.4} {:>9.4} {:>5}",
            r.dataset, r.method, r.seed, r.rmse, r.mae, r.sparsity, r.best_iteration
        );
    }
    if !rows.is_empty() {
        let col = |f: fn(&ReportRow) -> f64| mean_std(&rows.iter().map(f).collect::<Vec<_>>());
        let (rm, rs) = col(|r| r.rmse);
        let (mm, ms) = col(|r| r.mae);
        let (sm, ss) = col(|r| r.sparsity);
        let _ = writeln!(s);
        let _ = writeln!(s, "seeds: {}", rows.len());
        let _ = writeln!(s, "rmse:     {rm:.4} ± {rs:.4}");
        let _ = writeln!(s, "mae:      {mm:.4} ± {ms:.4}");
        let _ = writeln!(s, "sparsity: {sm:.4} ± {ss:.4}");
    }
    s
}

/// Writes `reports.csv` and `reports.txt`.
pub fn write_reports(dir: &Path, rows: &[ReportRow]) -> Result<()> {
    write_csv(&dir.join("reports.csv"), rows)?;
    let path = dir.join("reports.txt");
    let mut f = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
    f.write_all(summary_text(rows).as_bytes()).map_err(|e| CliError::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_examples() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn report_columns_are_fixed() {
        let metrics = MetricReport {
            rmse: 0.9,
            mae: 0.7,
            num_test_ratings: 10,
            cold_start_fallbacks: 1,
            fingerprint: "f".into(),
        };
        let row = ReportRow::new("ml", Method::Prmf, &HyperParams::default(), 3, 0.5, &metrics);
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(&row).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(
            header,
            "dataset,method,seed,dim,lambda_u,lambda_v,alpha,beta,gamma,learning_rate,rho,epochs,\
             admm_iterations,max_iter,best_iteration,rmse,mae,sparsity,num_test_ratings,\
             cold_start_fallbacks,fingerprint"
        );
    }
}
