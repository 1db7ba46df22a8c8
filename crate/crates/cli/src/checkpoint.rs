//! Versioned little-endian binary model checkpoint.
//!
//! Layout (all integers `u64` unless noted, floats `f64`, little-endian):
//!
//! ```text
//! magic "PRMFCKPT" | version u32 | m | n | d
//! U (m·d) | V (n·d)
//! Θ nnz | (i, k, value) × nnz          canonical upper-triangle entries
//! global mean | rating min | rating max
//! user_seen (m bytes) | item_seen (n bytes)
//! user ids | item ids                   count, then (len, utf-8 bytes) each
//! hyperparameters (len, JSON) | fingerprint (len, utf-8) | best iteration
//! ```

use std::fs;
use std::path::Path;

use prmf_core::evaluation::Model;
use prmf_core::ingest::{IdIndex, IdMap};
use prmf_core::{FactorMatrix, HyperParams, PrecisionMatrix, RatingRange, SymmetricSparse};

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 8] = b"PRMFCKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub ids: IdMap,
    pub params: HyperParams,
    pub fingerprint: String,
    /// Outer iteration the stored parameters come from.
    pub best_iteration: usize,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        vs.iter().for_each(|&v| self.f64(v));
    }
    fn bytes(&mut self, b: &[u8]) {
        self.usize(b.len());
        self.0.extend_from_slice(b);
    }
    fn ids(&mut self, ids: &IdIndex) {
        self.usize(ids.len());
        ids.ids().iter().for_each(|s| self.bytes(s.as_bytes()));
    }
}

/// Cursor over a byte buffer with bounds-checked little-endian reads.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn usize(&mut self) -> std::result::Result<usize, String> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| format!("length {v} does not fit in memory"))
    }

    pub(crate) fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn f64s(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        let bytes = self.take(n.checked_mul(8).ok_or("array length overflow")?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    pub(crate) fn string(&mut self) -> std::result::Result<String, String> {
        let n = self.usize()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| e.to_string())
    }

    fn flags(&mut self, n: usize) -> std::result::Result<Vec<bool>, String> {
        self.take(n)?
            .iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(format!("invalid flag byte {other}")),
            })
            .collect()
    }

    fn ids(&mut self) -> std::result::Result<IdIndex, String> {
        let n = self.usize()?;
        let ids = (0..n).map(|_| self.string()).collect::<std::result::Result<Vec<_>, _>>()?;
        IdIndex::from_ids(ids).map_err(|e| e.to_string())
    }

    fn finished(&self) -> bool {
        self.pos == self.buf.len()
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let m = &self.model;
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.0.extend_from_slice(&VERSION.to_le_bytes());
        w.usize(m.u.rows());
        w.usize(m.v.rows());
        w.usize(m.u.dim());
        w.f64s(m.u.values());
        w.f64s(m.v.values());
        w.usize(m.theta.entries().len());
        for &(i, k, v) in m.theta.entries() {
            w.usize(i);
            w.usize(k);
            w.f64(v);
        }
        w.f64(m.global_mean);
        w.f64(m.range.min);
        w.f64(m.range.max);
        w.0.extend(m.user_seen.iter().map(|&b| b as u8));
        w.0.extend(m.item_seen.iter().map(|&b| b as u8));
        w.ids(&self.ids.users);
        w.ids(&self.ids.items);
        w.bytes(&serde_json::to_vec(&self.params).expect("hyperparameters serialize"));
        w.bytes(self.fingerprint.as_bytes());
        w.usize(self.best_iteration);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader::new(bytes);
        if r.take(8)? != MAGIC {
            return Err("not a checkpoint file".into());
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(format!("format version {version} is not supported (expected {VERSION})"));
        }
        let (m, n, d) = (r.usize()?, r.usize()?, r.usize()?);
        let u = FactorMatrix::from_vec(m, d, r.f64s(m.checked_mul(d).ok_or("size overflow")?)?)
            .map_err(|e| e.to_string())?;
        let v = FactorMatrix::from_vec(n, d, r.f64s(n.checked_mul(d).ok_or("size overflow")?)?)
            .map_err(|e| e.to_string())?;
        let nnz = r.usize()?;
        let mut entries = Vec::with_capacity(nnz.min(bytes.len() / 24));
        for _ in 0..nnz {
            entries.push((r.usize()?, r.usize()?, r.f64()?));
        }
        let theta = PrecisionMatrix::new(SymmetricSparse::from_entries(m, entries).map_err(|e| e.to_string())?);
        let global_mean = r.f64()?;
        let range = RatingRange::new(r.f64()?, r.f64()?).map_err(|e| e.to_string())?;
        let user_seen = r.flags(m)?;
        let item_seen = r.flags(n)?;
        let users = r.ids()?;
        let items = r.ids()?;
        if users.len() != m || items.len() != n {
            return Err("id tables do not match matrix sizes".into());
        }
        let params_len = r.usize()?;
        let params: HyperParams =
            serde_json::from_slice(r.take(params_len)?).map_err(|e| format!("hyperparameters: {e}"))?;
        let fingerprint = r.string()?;
        let best_iteration = r.usize()?;
        if !r.finished() {
            return Err("trailing bytes after checkpoint".into());
        }
        Ok(Checkpoint {
            model: Model {
                u,
                v,
                theta,
                global_mean,
                user_seen,
                item_seen,
                range,
            },
            ids: IdMap { users, items },
            params,
            fingerprint,
            best_iteration,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|message| CliError::Checkpoint {
            path: path.to_path_buf(),
            message,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let u = FactorMatrix::from_rows(&[vec![0.1, -0.2], vec![1.5, f64::MIN_POSITIVE]]).unwrap();
        let v = FactorMatrix::from_rows(&[vec![0.3, 0.4], vec![-1e-300, 2.0], vec![0.0, -0.0]]).unwrap();
        let theta = PrecisionMatrix::new(SymmetricSparse::from_entries(2, [(0, 0, 1.0), (0, 1, -0.125)]).unwrap());
        Checkpoint {
            model: Model {
                u,
                v,
                theta,
                global_mean: 3.52,
                user_seen: vec![true, false],
                item_seen: vec![true, true, false],
                range: RatingRange::new(1.0, 5.0).unwrap(),
            },
            ids: IdMap {
                users: IdIndex::from_ids(vec!["196".into(), "ü".into()]).unwrap(),
                items: IdIndex::from_ids(vec!["a".into(), "b".into(), "c".into()]).unwrap(),
            },
            params: HyperParams::default(),
            fingerprint: "abc".into(),
            best_iteration: 4,
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.model.v.row(2)[1].to_bits(), (-0.0f64).to_bits());
        assert_eq!(back, c);
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let mut bytes = sample().to_bytes();
        bytes[8..12].copy_from_slice(&2u32.to_le_bytes());
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(err.contains("version 2"), "{err}");
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Checkpoint::from_bytes(b"PRMFCKP").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }
}
