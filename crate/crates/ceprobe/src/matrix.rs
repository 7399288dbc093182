//! Minimal row-major matrix used for feature tables and model weights.
//!
//! Serializes as a plain nested JSON array, which is the wire format the
//! model files use.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix of scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Matrix<F> {
    rows: Vec<Vec<F>>,
}

impl<F: Scalar> Matrix<F> {
    /// Builds a matrix from rows, checking that all rows share one width.
    pub fn from_rows(rows: Vec<Vec<F>>) -> Result<Self> {
        if let Some(first) = rows.first() {
            let width = first.len();
            if let Some(bad) = rows.iter().position(|r| r.len() != width) {
                return Err(Error::Shape(format!(
                    "row {bad} has {} columns, expected {width}",
                    rows[bad].len()
                )));
            }
        }
        Ok(Matrix { rows })
    }

    /// All-zeros matrix of the given shape.
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Matrix { rows: vec![vec![F::zero(); n_cols]; n_rows] }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.rows.first().map_or(0, |r| r.len())
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.rows[i]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [F] {
        &mut self.rows[i]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[F]> {
        self.rows.iter().map(|r| r.as_slice())
    }

    pub fn push_row(&mut self, row: Vec<F>) -> Result<()> {
        if !self.rows.is_empty() && row.len() != self.n_cols() {
            return Err(Error::Shape(format!(
                "pushed row has {} columns, expected {}",
                row.len(),
                self.n_cols()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    /// New matrix holding the listed rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Matrix { rows: indices.iter().map(|&i| self.rows[i].clone()).collect() }
    }

    /// Consumes the matrix, returning its rows.
    pub fn into_rows(self) -> Vec<Vec<F>> {
        self.rows
    }

    /// Maps every element, preserving shape.
    pub fn map<G: Scalar>(&self, mut f: impl FnMut(F) -> G) -> Matrix<G> {
        Matrix { rows: self.rows.iter().map(|r| r.iter().map(|&v| f(v)).collect()).collect() }
    }
}

/// Dot product accumulated in ascending index order.
///
/// Every inner product in the crate goes through this function so that
/// prediction and decomposition sum in the same order and reconstruction
/// stays bit-exact.
pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = F::zero();
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

/// Sums entries in ascending index order, matching `dot`'s accumulation.
pub fn sum_ascending<F: Scalar>(v: &[F]) -> F {
    let mut acc = F::zero();
    for &x in v {
        acc += x;
    }
    acc
}

/// Squared Euclidean distance, ascending index order.
pub fn sq_dist<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = F::zero();
    for i in 0..a.len() {
        let d = a[i] - b[i];
        acc += d * d;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_rows_rejects_ragged_input() {
        let err = Matrix::from_rows(vec![vec![1.0_f64, 2.0], vec![3.0]]).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn serializes_as_nested_arrays() {
        let m = Matrix::from_rows(vec![vec![1.5_f64, 2.0], vec![3.0, 4.0]]).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, "[[1.5,2.0],[3.0,4.0]]");
        let back: Matrix<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn select_reorders_rows() {
        let m = Matrix::from_rows(vec![vec![0.0_f64], vec![1.0], vec![2.0]]).unwrap();
        let s = m.select(&[2, 0]);
        assert_eq!(s.row(0), &[2.0]);
        assert_eq!(s.row(1), &[0.0]);
    }

    #[test]
    fn dot_matches_manual_sum() {
        let a = [1.0_f64, 2.0, 3.0];
        let b = [4.0, 5.0, 6.0];
        assert_eq!(dot(&a, &b), 32.0);
    }
}
