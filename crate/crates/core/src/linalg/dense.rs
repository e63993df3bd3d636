use std::fmt;
use std::ops::Index;

use nalgebra::DMatrix;

use crate::error::{KnhError, Result};

/// A finite real matrix.
///
/// Storage is delegated to `nalgebra`; the public constructors and
/// serialization use row-major order.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    inner: DMatrix<f64>,
}

impl DenseMatrix {
    pub fn from_row_major(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(KnhError::validation(format!(
                "expected {} values for a {rows}x{cols} matrix, got {}",
                rows * cols,
                values.len()
            )));
        }
        Self::from_matrix(DMatrix::from_row_slice(rows, cols, &values))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(KnhError::validation("rows have different lengths"));
        }
        let values = rows.iter().flatten().copied().collect();
        Self::from_row_major(rows.len(), cols, values)
    }

    /// Wraps an existing `nalgebra` matrix, rejecting NaN and infinities.
    pub fn from_matrix(inner: DMatrix<f64>) -> Result<Self> {
        if let Some(pos) = inner.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % inner.nrows().max(1), pos / inner.nrows().max(1));
            return Err(KnhError::validation(format!(
                "non-finite entry at ({r}, {c})"
            )));
        }
        Ok(Self { inner })
    }

    pub(crate) fn from_matrix_unchecked(inner: DMatrix<f64>) -> Self {
        debug_assert!(inner.iter().all(|v| v.is_finite()));
        Self { inner }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            inner: DMatrix::zeros(rows, cols),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            inner: DMatrix::identity(n, n),
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Self::from_matrix(DMatrix::from_fn(rows, cols, f))
    }

    pub fn rows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn cols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.inner.shape()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.inner[(row, col)]
    }

    /// Copy of one row.
    pub fn row(&self, row: usize) -> Vec<f64> {
        self.inner.row(row).iter().copied().collect()
    }

    /// Copy of one column.
    pub fn column(&self, col: usize) -> Vec<f64> {
        self.inner.column(col).iter().copied().collect()
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        self.inner.transpose().as_slice().to_vec()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows()).map(|r| self.row(r)).collect()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.inner
    }

    pub fn transpose(&self) -> Self {
        Self {
            inner: self.inner.transpose(),
        }
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<Self> {
        if self.cols() != other.rows() {
            return Err(KnhError::validation(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows(),
                self.cols(),
                other.rows(),
                other.cols()
            )));
        }
        Self::from_matrix(&self.inner * &other.inner)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.norm()
    }

    /// Largest absolute elementwise difference; `None` when shapes differ.
    pub fn max_abs_diff(&self, other: &DenseMatrix) -> Option<f64> {
        (self.shape() == other.shape()).then(|| {
            self.inner
                .iter()
                .zip(other.inner.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
    }

    /// Selects the listed columns, in order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self {
            inner: self.inner.select_columns(cols),
        }
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, index: (usize, usize)) -> &f64 {
        &self.inner[index]
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DenseMatrix {}x{} {:?}", self.rows(), self.cols(), self.to_rows())
    }
}
