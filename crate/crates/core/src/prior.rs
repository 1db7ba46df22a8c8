//! Prior row covariance `Σ` built from rating behaviour (optionally masked by
//! explicit social edges) and its rank-`d` PSD factor `X` with `XXᵀ ≈ Σ`.

use std::collections::BTreeSet;

use nalgebra::SymmetricEigen;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{FactorMatrix, PriorCovariance, SparseRatings, SymmetricSparse};
use crate::error::{Error, Result};
use crate::ingest::SocialEdges;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceMode {
    /// Covariance only between friends (either direction) and on the diagonal.
    ExplicitMasked,
    /// Covariance between every pair of users with co-rated items.
    ImplicitDense,
    /// No prior: `Σ = 0`.
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    pub mode: CovarianceMode,
    /// Minimum number of co-rated items below which a covariance is 0.
    pub floor: usize,
}

impl CovarianceSpec {
    pub fn new(mode: CovarianceMode, floor: usize) -> Result<Self> {
        if mode != CovarianceMode::None && floor < 2 {
            return Err(Error::usage(format!(
                "covariance floor must be >= 2, got {floor}"
            )));
        }
        Ok(CovarianceSpec { mode, floor })
    }

    pub fn implicit() -> Self {
        CovarianceSpec {
            mode: CovarianceMode::ImplicitDense,
            floor: 2,
        }
    }

    pub fn explicit() -> Self {
        CovarianceSpec {
            mode: CovarianceMode::ExplicitMasked,
            floor: 2,
        }
    }
}

/// Population covariance of two users' ratings over their co-rated items.
///
/// Both rows must be sorted by item. Means are taken over the co-rated
/// subset; fewer than `floor` shared items gives 0.
pub fn row_covariance(row_i: &[(usize, f64)], row_k: &[(usize, f64)], floor: usize) -> f64 {
    let mut shared: Vec<(f64, f64)> = Vec::new();
    let (mut a, mut b) = (0, 0);
    while a < row_i.len() && b < row_k.len() {
        match row_i[a].0.cmp(&row_k[b].0) {
            std::cmp::Ordering::Less => a += 1,
            std::cmp::Ordering::Greater => b += 1,
            std::cmp::Ordering::Equal => {
                shared.push((row_i[a].1, row_k[b].1));
                a += 1;
                b += 1;
            }
        }
    }
    if shared.is_empty() || shared.len() < floor {
        return 0.0;
    }
    let n = shared.len() as f64;
    let mean_i = shared.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_k = shared.iter().map(|p| p.1).sum::<f64>() / n;
    shared
        .iter()
        .map(|&(x, y)| (x - mean_i) * (y - mean_k))
        .sum::<f64>()
        / n
}

/// Builds `Σ` from the rating rows.
///
/// The diagonal always holds each user's own rating variance. Off-diagonal
/// entries follow `spec.mode`; explicit mode requires `social`.
pub fn build_sigma(
    ratings: &SparseRatings,
    social: Option<&SocialEdges>,
    spec: &CovarianceSpec,
) -> Result<PriorCovariance> {
    let m = ratings.num_users();
    if spec.mode == CovarianceMode::None {
        return Ok(PriorCovariance::zeros(m));
    }
    if ratings.is_empty() {
        return Err(Error::usage("cannot build a prior covariance from no ratings"));
    }
    let floor = spec.floor;

    let mut entries: Vec<(usize, usize, f64)> = (0..m)
        .into_par_iter()
        .map(|i| (i, i, row_covariance(ratings.user_row(i), ratings.user_row(i), floor)))
        .collect();

    match spec.mode {
        CovarianceMode::ExplicitMasked => {
            let social = social.ok_or_else(|| {
                Error::usage("explicit covariance mode requires social edges")
            })?;
            let mut pairs = BTreeSet::new();
            for &(a, b) in &social.edges {
                if a >= m || b >= m {
                    return Err(Error::usage(format!("social edge ({a}, {b}) outside {m} users")));
                }
                if a != b {
                    pairs.insert((a.min(b), a.max(b)));
                }
            }
            let pairs: Vec<_> = pairs.into_iter().collect();
            entries.par_extend(pairs.into_par_iter().map(|(i, k)| {
                (i, k, row_covariance(ratings.user_row(i), ratings.user_row(k), floor))
            }));
        }
        CovarianceMode::ImplicitDense => {
            let off: Vec<Vec<(usize, usize, f64)>> = (0..m)
                .into_par_iter()
                .map(|i| {
                    let row_i = ratings.user_row(i);
                    ((i + 1)..m)
                        .filter_map(|k| {
                            let c = row_covariance(row_i, ratings.user_row(k), floor);
                            (c != 0.0).then_some((i, k, c))
                        })
                        .collect()
                })
                .collect();
            entries.extend(off.into_iter().flatten());
        }
        CovarianceMode::None => unreachable!(),
    }

    PriorCovariance::new(SymmetricSparse::from_entries(m, entries)?)
}

/// Best PSD rank-`d` factor of `Σ`: `X = E_d · diag(√λ_d)` over the `d`
/// largest eigenvalues, negatives clamped to zero.
///
/// Columns are ordered by descending eigenvalue; each eigenvector's first
/// non-negligible entry is made positive.
pub fn low_rank_factor(sigma: &PriorCovariance, d: usize) -> Result<FactorMatrix> {
    let m = sigma.size();
    if d > m {
        return Err(Error::usage(format!("rank {d} exceeds matrix size {m}")));
    }
    let eig = SymmetricEigen::new(sigma.to_dense());
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut values = vec![0.0; m * d];
    for (col, &idx) in order.iter().take(d).enumerate() {
        let lambda = eig.eigenvalues[idx].max(0.0);
        let vec = eig.eigenvectors.column(idx);
        let scale_ref = vec.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let sign = vec
            .iter()
            .find(|v| v.abs() > 1e-12 * scale_ref)
            .map_or(1.0, |v| v.signum());
        let s = sign * lambda.sqrt();
        for i in 0..m {
            values[i * d + col] = vec[i] * s;
        }
    }
    FactorMatrix::from_vec(m, d, values)
}

/// `Σ` together with its low-rank factor, as consumed by training.
#[derive(Clone, Debug, PartialEq)]
pub struct Prior {
    pub sigma: PriorCovariance,
    pub factor: FactorMatrix,
}

impl Prior {
    pub fn new(sigma: PriorCovariance, d: usize) -> Result<Self> {
        let factor = low_rank_factor(&sigma, d)?;
        Ok(Prior { sigma, factor })
    }
}
