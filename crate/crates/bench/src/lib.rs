//! Synthetic inputs shared by the benchmarks.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use prmf_core::{FactorMatrix, Rating, SparseRatings};

/// Factor matrix with entries uniform on `[-1, 1)`.
pub fn random_factors(rows: usize, dim: usize, seed: u64) -> FactorMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..rows * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    FactorMatrix::from_vec(rows, dim, values).expect("sizes match")
}

pub fn random_square(m: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0))
}

/// Ratings on `1..=5` with each cell observed with probability `density`.
pub fn random_ratings(m: usize, n: usize, density: f64, seed: u64) -> SparseRatings {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triples = Vec::new();
    for i in 0..m {
        for j in 0..n {
            if rng.random_bool(density) {
                triples.push(Rating::new(i, j, rng.random_range(1..=5) as f64));
            }
        }
    }
    SparseRatings::new(m, n, triples).expect("indices in range")
}
