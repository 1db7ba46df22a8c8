//! Run configuration: a TOML file, method-dependent defaults and
//! command-line overrides, resolved into one [`RunConfig`].

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use prmf_core::evaluation::{TrainOptions, TuningGrid};
use prmf_core::ingest::{RatingFormat, SplitOptions};
use prmf_core::prior::{CovarianceMode, CovarianceSpec};
use prmf_core::HyperParams;

use crate::error::{CliError, Result};

/// Prior weight used by the prior-informed methods unless configured.
pub const DEFAULT_PRIOR_BETA: f64 = 10.0;

/// The γ grid of the sparsity study.
pub const PAPER_GAMMAS: [f64; 11] = [0.0, 1e-4, 1e-3, 1e-2, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0, 10.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Plain matrix factorization, no user coupling.
    Pmf,
    /// Learned user dependencies without prior covariance.
    Prmf,
    /// Prior covariance from co-rating behaviour of every user pair.
    PrmfImp,
    /// Prior covariance restricted to explicit social edges.
    PrmfExp,
}

impl Method {
    pub fn covariance_mode(self) -> CovarianceMode {
        match self {
            Method::Pmf | Method::Prmf => CovarianceMode::None,
            Method::PrmfImp => CovarianceMode::ImplicitDense,
            Method::PrmfExp => CovarianceMode::ExplicitMasked,
        }
    }

    pub fn uses_prior(self) -> bool {
        self.covariance_mode() != CovarianceMode::None
    }

    fn default_params(self) -> HyperParams {
        let base = HyperParams::default();
        match self {
            Method::Pmf => HyperParams { alpha: 0.0, beta: 0.0, ..base },
            Method::Prmf => HyperParams { beta: 0.0, ..base },
            Method::PrmfImp | Method::PrmfExp => HyperParams { beta: DEFAULT_PRIOR_BETA, ..base },
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Pmf => "pmf",
            Method::Prmf => "prmf",
            Method::PrmfImp => "prmf-imp",
            Method::PrmfExp => "prmf-exp",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Label used in reports and fingerprints; defaults to the ratings file stem.
    #[serde(default)]
    pub name: String,
    pub ratings: PathBuf,
    #[serde(default = "default_format")]
    pub format: RatingFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub social: Option<PathBuf>,
}

fn default_format() -> RatingFormat {
    RatingFormat::Tsv
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    /// Minimum co-rated items for a nonzero covariance entry.
    pub floor: usize,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig { floor: 2 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub shuffle: bool,
    pub decay: f64,
    pub track_objective: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let o = TrainOptions::default();
        TrainingConfig {
            shuffle: o.shuffle,
            decay: o.decay,
            track_objective: o.track_objective,
        }
    }
}

impl From<TrainingConfig> for TrainOptions {
    fn from(t: TrainingConfig) -> Self {
        TrainOptions {
            shuffle: t.shuffle,
            decay: t.decay,
            track_objective: t.track_objective,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "paper_gammas")]
    pub gammas: Vec<f64>,
}

fn paper_gammas() -> Vec<f64> {
    PAPER_GAMMAS.to_vec()
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { gammas: paper_gammas() }
    }
}

/// Validation grid searched on the first seed's split before training.
/// Empty lists keep the configured value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuningConfig {
    pub lambdas: Vec<f64>,
    pub learning_rates: Vec<f64>,
    pub alphas: Vec<f64>,
}

impl TuningConfig {
    pub fn grid(&self) -> TuningGrid {
        TuningGrid {
            lambdas: self.lambdas.clone(),
            learning_rates: self.learning_rates.clone(),
            alphas: self.alphas.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub jobs: usize,
    pub data: DataConfig,
    pub split: SplitOptions,
    pub params: HyperParams,
    pub prior: PriorConfig,
    pub training: TrainingConfig,
    pub sweep: SweepConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuning: Option<TuningConfig>,
}

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub method: Option<Method>,
    pub dataset_format: Option<RatingFormat>,
    pub gamma: Vec<f64>,
    pub seed: Vec<u64>,
    pub jobs: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

/// File layout before defaults are applied; `params` stays a raw table so it
/// can be laid over the method's defaults.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    method: Option<Method>,
    seeds: Option<Vec<u64>>,
    output_dir: Option<PathBuf>,
    jobs: Option<usize>,
    data: DataConfig,
    #[serde(default)]
    split: Option<SplitOptions>,
    #[serde(default)]
    params: toml::Table,
    #[serde(default)]
    prior: PriorConfig,
    #[serde(default)]
    training: TrainingConfig,
    #[serde(default)]
    sweep: SweepConfig,
    tuning: Option<TuningConfig>,
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base, overrides)
    }

    /// Parses a config document; relative paths resolve against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path, overrides: &Overrides) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let method = overrides.method.or(raw.method).unwrap_or(Method::Prmf);

        let mut table = toml::Table::try_from(method.default_params())
            .map_err(|e| CliError::Config(e.to_string()))?;
        for key in ["alpha", "beta"] {
            if let Some(v) = raw.params.get(key).and_then(toml_number) {
                let forbidden = match (method, key) {
                    (Method::Pmf, _) => v != 0.0,
                    (Method::Prmf, "beta") => v != 0.0,
                    _ => false,
                };
                if forbidden {
                    return Err(CliError::Config(format!(
                        "method {method} requires {key} = 0, config sets {v}"
                    )));
                }
            }
        }
        table.extend(raw.params);
        let mut params: HyperParams = table
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(format!("[params]: {e}")))?;
        if let Some(&g) = overrides.gamma.first() {
            params.gamma = g;
        }
        params.validate().map_err(|e| CliError::Config(e.to_string()))?;

        let mut data = raw.data;
        data.ratings = resolve(base_dir, &data.ratings);
        data.social = data.social.map(|p| resolve(base_dir, &p));
        if let Some(f) = overrides.dataset_format {
            data.format = f;
        }
        if data.name.is_empty() {
            data.name = data
                .ratings
                .file_stem()
                .map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned());
        }

        let mut sweep = raw.sweep;
        if !overrides.gamma.is_empty() {
            sweep.gammas = overrides.gamma.clone();
        }
        let seeds = if overrides.seed.is_empty() {
            raw.seeds.unwrap_or_else(|| vec![params.seed])
        } else {
            overrides.seed.clone()
        };
        let output_dir = overrides
            .output_dir
            .clone()
            .unwrap_or_else(|| resolve(base_dir, &raw.output_dir.unwrap_or_else(|| PathBuf::from("runs"))));

        let cfg = RunConfig {
            method,
            seeds,
            output_dir,
            jobs: overrides.jobs.or(raw.jobs).unwrap_or(1),
            data,
            split: raw.split.unwrap_or_default(),
            params,
            prior: raw.prior,
            training: raw.training,
            sweep,
            tuning: raw.tuning,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.method == Method::PrmfExp && self.data.social.is_none() {
            return bad("method prmf-exp requires data.social".into());
        }
        if self.method == Method::Prmf && self.params.beta != 0.0 {
            return bad("method prmf requires beta = 0".into());
        }
        if self.method == Method::Pmf && (self.params.alpha != 0.0 || self.params.beta != 0.0) {
            return bad("method pmf requires alpha = 0 and beta = 0".into());
        }
        if self.method.uses_prior() && self.params.beta <= 0.0 {
            return bad(format!("method {} requires beta > 0", self.method));
        }
        if self.seeds.is_empty() {
            return bad("seed list is empty".into());
        }
        if self.jobs == 0 {
            return bad("jobs must be >= 1".into());
        }
        if self.sweep.gammas.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
            return bad("sweep gammas must be finite and >= 0".into());
        }
        self.covariance_spec()?;
        Ok(())
    }

    pub fn covariance_spec(&self) -> Result<CovarianceSpec> {
        CovarianceSpec::new(self.method.covariance_mode(), self.prior.floor)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn params_for_seed(&self, seed: u64) -> HyperParams {
        HyperParams { seed, ..self.params.clone() }
    }

    /// Directory holding this method's run outputs.
    pub fn method_dir(&self) -> PathBuf {
        self.output_dir.join(self.method.to_string())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }
}

fn toml_number(v: &toml::Value) -> Option<f64> {
    v.as_float().or_else(|| v.as_integer().map(|i| i as f64))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
