//! Prepared-data layout: per-seed split files and the cached prior.
//!
//! ```text
//! <output_dir>/prepared/seed-<s>/
//!     users.txt items.txt          external ids, one per line, in index order
//!     train.tsv validation.tsv test.tsv   user_index<TAB>item_index<TAB>rating
//!     manifest.json                fingerprint of the split contents
//!     prior-<mode>-floor<f>-d<d>.bin      Σ entries and factor X
//! ```

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use prmf_core::evaluation::ratings_fingerprint;
use prmf_core::ingest::{self, DatasetSplit, IdIndex, IdMap, SocialEdges};
use prmf_core::prior::{build_sigma, Prior};
use prmf_core::{FactorMatrix, PriorCovariance, Rating, SparseRatings, SymmetricSparse};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

const PRIOR_MAGIC: &[u8; 8] = b"PRMFPRIO";
const PRIOR_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct Manifest {
    seed: u64,
    fingerprint: String,
    sizes: [usize; 3],
}

/// A split loaded back from disk.
#[derive(Clone, Debug)]
pub struct PreparedSplit {
    pub seed: u64,
    pub split: DatasetSplit,
    pub fingerprint: String,
}

pub fn seed_dir(cfg: &RunConfig, seed: u64) -> PathBuf {
    cfg.output_dir.join("prepared").join(format!("seed-{seed}"))
}

fn prior_path(cfg: &RunConfig, seed: u64) -> PathBuf {
    let spec = cfg.covariance_spec().expect("validated config");
    let mode = serde_json::to_value(spec.mode).expect("mode serializes");
    seed_dir(cfg, seed).join(format!(
        "prior-{}-floor{}-d{}.bin",
        mode.as_str().unwrap_or("none"),
        spec.floor,
        cfg.params.dim
    ))
}

fn read_records(cfg: &RunConfig) -> Result<Vec<ingest::RawRecord>> {
    let path = &cfg.data.ratings;
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let records = ingest::parse_ratings(BufReader::new(file), cfg.data.format)
        .map_err(|e| CliError::input(path, e))?;
    ingest::check_scale(&records, cfg.params.rating_range()).map_err(|e| CliError::input(path, e))?;
    Ok(records)
}

fn read_social(cfg: &RunConfig, users: &IdIndex) -> Result<Option<SocialEdges>> {
    let Some(path) = &cfg.data.social else {
        return Ok(None);
    };
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let parsed = ingest::parse_social(BufReader::new(file), users).map_err(|e| CliError::input(path, e))?;
    log::info!(
        "{}: {} social edges ({} unknown, {} self-loops dropped)",
        path.display(),
        parsed.edges.len(),
        parsed.unknown_dropped,
        parsed.self_loops_dropped
    );
    Ok(Some(parsed.edges))
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

fn write_ids(path: &Path, ids: &IdIndex) -> Result<()> {
    write_file(path, |w| ids.ids().iter().try_for_each(|id| writeln!(w, "{id}")))
}

fn write_ratings(path: &Path, ratings: &SparseRatings) -> Result<()> {
    write_file(path, |w| {
        ratings
            .triples()
            .iter()
            .try_for_each(|r| writeln!(w, "{}\t{}\t{}", r.user, r.item, r.value))
    })
}

fn read_ids(path: &Path) -> Result<IdIndex> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    IdIndex::from_ids(text.lines().map(str::to_string).collect()).map_err(|e| CliError::input(path, e))
}

fn read_ratings(path: &Path, m: usize, n: usize) -> Result<SparseRatings> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut triples = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        let bad = |message: String| CliError::input(path, prmf_core::Error::Parse { line: idx + 1, message });
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", f.len())));
        }
        let user = f[0].parse().map_err(|e| bad(format!("user index: {e}")))?;
        let item = f[1].parse().map_err(|e| bad(format!("item index: {e}")))?;
        let value = f[2].parse().map_err(|e| bad(format!("rating: {e}")))?;
        triples.push(Rating::new(user, item, value));
    }
    SparseRatings::new(m, n, triples).map_err(|e| CliError::input(path, e))
}

fn split_fingerprint(split: &DatasetSplit) -> String {
    ratings_fingerprint(&[&split.train, &split.validation, &split.test])
}

/// Writes the split for one seed unless an identical one is already on disk.
fn prepare_split_files(cfg: &RunConfig, records: &[ingest::RawRecord], seed: u64) -> Result<DatasetSplit> {
    let split = ingest::prepare_split(records.to_vec(), &cfg.split, seed)?;
    let dir = seed_dir(cfg, seed);
    let manifest = Manifest {
        seed,
        fingerprint: split_fingerprint(&split),
        sizes: [split.train.len(), split.validation.len(), split.test.len()],
    };
    let manifest_path = dir.join("manifest.json");
    let existing = fs::read(&manifest_path)
        .ok()
        .and_then(|b| serde_json::from_slice::<Manifest>(&b).ok());
    if existing.as_ref() == Some(&manifest) {
        log::info!("seed {seed}: reusing prepared split in {}", dir.display());
        return Ok(split);
    }
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    write_ids(&dir.join("users.txt"), &split.ids.users)?;
    write_ids(&dir.join("items.txt"), &split.ids.items)?;
    write_ratings(&dir.join("train.tsv"), &split.train)?;
    write_ratings(&dir.join("validation.tsv"), &split.validation)?;
    write_ratings(&dir.join("test.tsv"), &split.test)?;
    // manifest last: its presence marks a complete split
    let body = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, body).map_err(|e| CliError::io(&manifest_path, e))?;
    log::info!(
        "seed {seed}: wrote split ({}, {}, {}) to {}",
        manifest.sizes[0],
        manifest.sizes[1],
        manifest.sizes[2],
        dir.display()
    );
    Ok(split)
}

/// Result of preparing one seed.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedSeed {
    pub seed: u64,
    pub sizes: [usize; 3],
    pub prior_reused: Option<bool>,
}

/// Writes every seed's split and, for prior-informed methods, its prior cache.
pub fn prepare(cfg: &RunConfig) -> Result<Vec<PreparedSeed>> {
    let records = read_records(cfg)?;
    let mut out = Vec::new();
    for &seed in &cfg.seeds {
        let split = prepare_split_files(cfg, &records, seed)?;
        let prior_reused = if cfg.method.uses_prior() {
            let social = read_social(cfg, &split.ids.users)?;
            Some(ensure_prior(cfg, seed, &split, social.as_ref())?.1)
        } else {
            None
        };
        out.push(PreparedSeed {
            seed,
            sizes: [split.train.len(), split.validation.len(), split.test.len()],
            prior_reused,
        });
    }
    Ok(out)
}

pub fn load_split(cfg: &RunConfig, seed: u64) -> Result<PreparedSplit> {
    let dir = seed_dir(cfg, seed);
    let manifest_path = dir.join("manifest.json");
    if !manifest_path.exists() {
        return Err(CliError::NotPrepared { path: dir });
    }
    let manifest: Manifest = serde_json::from_slice(&fs::read(&manifest_path).map_err(|e| CliError::io(&manifest_path, e))?)
        .map_err(|e| CliError::Config(format!("{}: {e}", manifest_path.display())))?;
    let users = read_ids(&dir.join("users.txt"))?;
    let items = read_ids(&dir.join("items.txt"))?;
    let (m, n) = (users.len(), items.len());
    let split = DatasetSplit {
        train: read_ratings(&dir.join("train.tsv"), m, n)?,
        validation: read_ratings(&dir.join("validation.tsv"), m, n)?,
        test: read_ratings(&dir.join("test.tsv"), m, n)?,
        ids: IdMap { users, items },
    };
    let fingerprint = split_fingerprint(&split);
    if fingerprint != manifest.fingerprint {
        return Err(CliError::Config(format!(
            "prepared split in {} does not match its manifest; rerun `prmf prepare`",
            dir.display()
        )));
    }
    Ok(PreparedSplit { seed, split, fingerprint })
}

/// Loads the cached prior for a prepared split, building it if absent or stale.
/// The flag reports whether the cache was reused.
pub fn ensure_prior(
    cfg: &RunConfig,
    seed: u64,
    split: &DatasetSplit,
    social: Option<&SocialEdges>,
) -> Result<(Prior, bool)> {
    let path = prior_path(cfg, seed);
    let key = ratings_fingerprint(&[&split.train]);
    if let Ok(prior) = read_prior(&path, &key) {
        log::info!("seed {seed}: reusing cached prior {}", path.display());
        return Ok((prior, true));
    }
    let spec = cfg.covariance_spec()?;
    // Σ comes from training ratings only, so held-out ratings never leak into the prior
    let sigma = build_sigma(&split.train, social, &spec)?;
    let prior = Prior::new(sigma, cfg.params.dim)?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    write_prior(&path, &key, &prior)?;
    log::info!("seed {seed}: wrote prior cache {}", path.display());
    Ok((prior, false))
}

pub fn load_prior(cfg: &RunConfig, prepared: &PreparedSplit) -> Result<Option<Prior>> {
    if !cfg.method.uses_prior() {
        return Ok(None);
    }
    let social = read_social(cfg, &prepared.split.ids.users)?;
    Ok(Some(ensure_prior(cfg, prepared.seed, &prepared.split, social.as_ref())?.0))
}

fn write_prior(path: &Path, key: &str, prior: &Prior) -> Result<()> {
    write_file(path, |w| {
        w.write_all(PRIOR_MAGIC)?;
        w.write_all(&PRIOR_VERSION.to_le_bytes())?;
        w.write_all(&(key.len() as u64).to_le_bytes())?;
        w.write_all(key.as_bytes())?;
        let entries = prior.sigma.entries();
        w.write_all(&(prior.sigma.size() as u64).to_le_bytes())?;
        w.write_all(&(entries.len() as u64).to_le_bytes())?;
        for &(i, k, v) in entries {
            w.write_all(&(i as u64).to_le_bytes())?;
            w.write_all(&(k as u64).to_le_bytes())?;
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(prior.factor.dim() as u64).to_le_bytes())?;
        prior.factor.values().iter().try_for_each(|v| w.write_all(&v.to_le_bytes()))
    })
}

fn read_prior(path: &Path, key: &str) -> std::result::Result<Prior, String> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| e.to_string())?;
    let mut r = crate::checkpoint::Reader::new(&bytes);
    if r.take(8)? != PRIOR_MAGIC || r.u32()? != PRIOR_VERSION {
        return Err("not a prior cache of this version".into());
    }
    if r.string()? != key {
        return Err("prior cache belongs to different training data".into());
    }
    let m = r.usize()?;
    let nnz = r.usize()?;
    let mut entries = Vec::with_capacity(nnz);
    for _ in 0..nnz {
        entries.push((r.usize()?, r.usize()?, r.f64()?));
    }
    let d = r.usize()?;
    let values = r.f64s(m * d)?;
    let sigma = SymmetricSparse::from_entries(m, entries).map_err(|e| e.to_string())?;
    Ok(Prior {
        sigma: PriorCovariance::new(sigma).map_err(|e| e.to_string())?,
        factor: FactorMatrix::from_vec(m, d, values).map_err(|e| e.to_string())?,
    })
}
