use std::ops::Deref;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Symmetric sparse `m x m` matrix.
///
/// Entries are stored once in canonical `(i, k)` form with `i <= k`, so
/// symmetry holds by construction. A full per-row adjacency (both
/// triangles) is derived for sparse-dense row products.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricSparse {
    size: usize,
    entries: Vec<(usize, usize, f64)>,
    row_offsets: Vec<usize>,
    adjacency: Vec<(usize, f64)>,
}

impl SymmetricSparse {
    /// Builds from `(i, k, value)` triples in any triangle. Each unordered
    /// pair may appear at most once; exact zeros are dropped.
    pub fn from_entries<I>(size: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut canonical: Vec<(usize, usize, f64)> = Vec::new();
        for (i, k, v) in entries {
            if i >= size || k >= size {
                return Err(Error::usage(format!(
                    "entry ({i}, {k}) outside {size}x{size} matrix"
                )));
            }
            if !v.is_finite() {
                return Err(Error::usage(format!("non-finite entry at ({i}, {k})")));
            }
            if v != 0.0 {
                canonical.push((i.min(k), i.max(k), v));
            }
        }
        canonical.sort_by_key(|&(i, k, _)| (i, k));
        if let Some(w) = canonical
            .windows(2)
            .find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1))
        {
            return Err(Error::usage(format!(
                "duplicate entry for pair ({}, {})",
                w[0].0, w[0].1
            )));
        }
        Ok(Self::from_sorted_canonical(size, canonical))
    }

    fn from_sorted_canonical(size: usize, entries: Vec<(usize, usize, f64)>) -> Self {
        let mut row_offsets = vec![0usize; size + 1];
        for &(i, k, _) in &entries {
            row_offsets[i + 1] += 1;
            if i != k {
                row_offsets[k + 1] += 1;
            }
        }
        for i in 0..size {
            row_offsets[i + 1] += row_offsets[i];
        }
        let mut cursor = row_offsets.clone();
        let mut adjacency = vec![(0usize, 0.0f64); row_offsets[size]];
        for &(i, k, v) in &entries {
            adjacency[cursor[i]] = (k, v);
            cursor[i] += 1;
            if i != k {
                adjacency[cursor[k]] = (i, v);
                cursor[k] += 1;
            }
        }
        for i in 0..size {
            adjacency[row_offsets[i]..row_offsets[i + 1]].sort_by_key(|&(c, _)| c);
        }
        SymmetricSparse {
            size,
            entries,
            row_offsets,
            adjacency,
        }
    }

    pub fn zeros(size: usize) -> Self {
        Self::from_sorted_canonical(size, Vec::new())
    }

    pub fn identity(size: usize) -> Self {
        Self::from_sorted_canonical(size, (0..size).map(|i| (i, i, 1.0)).collect())
    }

    /// Reads the upper triangle of a dense matrix that is known to be symmetric.
    pub fn from_dense_upper(dense: &DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = dense.shape();
        if rows != cols {
            return Err(Error::usage("matrix must be square"));
        }
        let mut entries = Vec::new();
        for i in 0..rows {
            for k in i..rows {
                let v = dense[(i, k)];
                if !v.is_finite() {
                    return Err(Error::usage(format!("non-finite entry at ({i}, {k})")));
                }
                if v != 0.0 {
                    entries.push((i, k, v));
                }
            }
        }
        Ok(Self::from_sorted_canonical(rows, entries))
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Canonical `(i, k, value)` entries with `i <= k`, sorted.
    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// Nonzeros of row `i` (both triangles), sorted by column.
    #[inline]
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[self.row_offsets[i]..self.row_offsets[i + 1]]
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        let row = self.row(i);
        row.binary_search_by_key(&k, |&(c, _)| c)
            .map(|p| row[p].1)
            .unwrap_or(0.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.size).map(|i| self.get(i, i)).collect()
    }

    /// Nonzero positions over all `m²` entries (off-diagonal pairs count twice).
    pub fn nnz(&self) -> usize {
        self.adjacency.len()
    }

    /// Fraction of the `m²` positions that are exactly zero, diagonal included.
    pub fn sparsity(&self) -> f64 {
        if self.size == 0 {
            return 1.0;
        }
        let total = (self.size * self.size) as f64;
        1.0 - self.nnz() as f64 / total
    }

    /// Entrywise ℓ1 norm over the full matrix.
    pub fn l1_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(i, k, v)| if i == k { v.abs() } else { 2.0 * v.abs() })
            .sum()
    }

    pub fn max_abs_off_diagonal(&self) -> f64 {
        self.entries
            .iter()
            .filter(|&&(i, k, _)| i != k)
            .map(|&(_, _, v)| v.abs())
            .fold(0.0, f64::max)
    }

    pub fn value_range(&self) -> Option<(f64, f64)> {
        self.entries.iter().fold(None, |acc, &(_, _, v)| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_entries(
            self.size,
            self.entries.iter().map(|&(i, k, v)| (i, k, v * factor)),
        )
        .expect("scaling preserves canonical form")
    }

    /// Relabels indices: entry `(i, k)` moves to `(perm[i], perm[k])`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.size {
            return Err(Error::usage("permutation length mismatch"));
        }
        Self::from_entries(
            self.size,
            self.entries.iter().map(|&(i, k, v)| (perm[i], perm[k], v)),
        )
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.size, self.size);
        for &(i, k, v) in &self.entries {
            d[(i, k)] = v;
            d[(k, i)] = v;
        }
        d
    }
}

/// Learned row precision matrix `Θ` (user dependency).
#[derive(Clone, Debug, PartialEq)]
pub struct PrecisionMatrix(SymmetricSparse);

impl PrecisionMatrix {
    pub fn new(inner: SymmetricSparse) -> Self {
        PrecisionMatrix(inner)
    }

    pub fn identity(size: usize) -> Self {
        PrecisionMatrix(SymmetricSparse::identity(size))
    }

    pub fn zeros(size: usize) -> Self {
        PrecisionMatrix(SymmetricSparse::zeros(size))
    }

    pub fn into_inner(self) -> SymmetricSparse {
        self.0
    }
}

impl Deref for PrecisionMatrix {
    type Target = SymmetricSparse;

    fn deref(&self) -> &SymmetricSparse {
        &self.0
    }
}

/// Prior row covariance `Σ`. Diagonal entries are variances and never negative.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorCovariance(SymmetricSparse);

impl PriorCovariance {
    pub fn new(inner: SymmetricSparse) -> Result<Self> {
        if let Some(&(i, _, v)) = inner.entries().iter().find(|&&(i, k, v)| i == k && v < 0.0) {
            return Err(Error::usage(format!(
                "prior covariance has negative variance {v} at ({i}, {i})"
            )));
        }
        Ok(PriorCovariance(inner))
    }

    pub fn zeros(size: usize) -> Self {
        PriorCovariance(SymmetricSparse::zeros(size))
    }

    pub fn into_inner(self) -> SymmetricSparse {
        self.0
    }
}

impl Deref for PriorCovariance {
    type Target = SymmetricSparse;

    fn deref(&self) -> &SymmetricSparse {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_storage_is_symmetric() {
        let s = SymmetricSparse::from_entries(3, vec![(2, 0, 1.5), (1, 1, -2.0), (0, 1, 0.0)]).unwrap();
        assert_eq!(s.entries(), &[(0, 2, 1.5), (1, 1, -2.0)]);
        assert_eq!(s.get(0, 2), 1.5);
        assert_eq!(s.get(2, 0), 1.5);
        assert_eq!(s.row(2), &[(0, 1.5)]);
        assert_eq!(s.nnz(), 3);
        assert!((s.sparsity() - 6.0 / 9.0).abs() < 1e-15);
        assert_eq!(s.l1_norm(), 5.0);
    }

    #[test]
    fn duplicate_pair_in_either_triangle_is_rejected() {
        assert!(SymmetricSparse::from_entries(2, vec![(0, 1, 1.0), (1, 0, 1.0)]).is_err());
    }

    #[test]
    fn sparsity_counts_diagonal() {
        assert_eq!(SymmetricSparse::zeros(4).sparsity(), 1.0);
        assert!((SymmetricSparse::identity(4).sparsity() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn prior_rejects_negative_variance() {
        let s = SymmetricSparse::from_entries(2, vec![(1, 1, -0.1)]).unwrap();
        assert!(PriorCovariance::new(s).is_err());
        let s = SymmetricSparse::from_entries(2, vec![(0, 1, -0.1), (1, 1, 0.3)]).unwrap();
        assert!(PriorCovariance::new(s).is_ok());
    }

    #[test]
    fn dense_round_trip() {
        let s = SymmetricSparse::from_entries(3, vec![(0, 1, 0.5), (2, 2, 3.0)]).unwrap();
        assert_eq!(SymmetricSparse::from_dense_upper(&s.to_dense()).unwrap(), s);
    }
}
