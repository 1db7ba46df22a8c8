use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Dense row-major latent-factor matrix (`U`, `V`, `X` or the augmented `Û`).
#[derive(Clone, Debug, PartialEq)]
pub struct FactorMatrix {
    rows: usize,
    dim: usize,
    values: Vec<f64>,
}

impl FactorMatrix {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        FactorMatrix {
            rows,
            dim,
            values: vec![0.0; rows * dim],
        }
    }

    pub fn from_vec(rows: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * dim {
            return Err(Error::usage(format!(
                "factor matrix {}x{} needs {} values, got {}",
                rows,
                dim,
                rows * dim,
                values.len()
            )));
        }
        Ok(FactorMatrix { rows, dim, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::usage("ragged factor rows"));
        }
        Ok(FactorMatrix {
            rows: rows.len(),
            dim,
            values: rows.concat(),
        })
    }

    /// Entries drawn i.i.d. from `N(0, std²)`.
    pub fn gaussian<R: Rng + ?Sized>(rows: usize, dim: usize, std: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, std).expect("standard deviation must be finite and >= 0");
        let values = (0..rows * dim).map(|_| normal.sample(rng)).collect();
        FactorMatrix { rows, dim, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        FactorMatrix {
            rows: self.rows,
            dim: self.dim,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Column-wise concatenation `[self, other]`.
    pub fn hstack(&self, other: &FactorMatrix) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::usage(format!(
                "cannot stack {} rows with {} rows",
                self.rows, other.rows
            )));
        }
        let dim = self.dim + other.dim;
        let mut values = Vec::with_capacity(self.rows * dim);
        for i in 0..self.rows {
            values.extend_from_slice(self.row(i));
            values.extend_from_slice(other.row(i));
        }
        Ok(FactorMatrix {
            rows: self.rows,
            dim,
            values,
        })
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.dim, &self.values)
    }

    pub fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        let (rows, dim) = m.shape();
        let mut values = Vec::with_capacity(rows * dim);
        for i in 0..rows {
            values.extend(m.row(i).iter());
        }
        FactorMatrix { rows, dim, values }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
