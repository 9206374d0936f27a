//! Dense row-major real matrices.
//!
//! All arithmetic is carried out in `f64`. Checkpoints store factors as
//! `f32`; conversion happens at the I/O boundary.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Products with fewer multiply-adds than this stay on the calling thread.
#[cfg(feature = "parallel")]
const PARALLEL_FLOP_THRESHOLD: usize = 1 << 18;

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", &self.row(r)[..self.cols.min(8)])?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    /// Builds a matrix from row-major data, rejecting empty shapes,
    /// length mismatches and non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{rows}x{cols} matrix data")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::new(r, c, rows.concat())
    }

    pub fn from_f32(rows: usize, cols: usize, data: &[f32]) -> Result<Self> {
        Self::new(rows, cols, data.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// `rows x cols` matrix whose leading columns are the identity.
    pub fn eye(rows: usize, cols: usize) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows.min(cols) {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.data[r * cols + c] = f(r, c);
            }
        }
        m
    }

    /// Builds a matrix from column vectors of equal length.
    pub fn from_columns(columns: &[Vec<f64>]) -> Self {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        Self::from_fn(rows, cols, |r, c| columns[c][r])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn min_dim(&self) -> usize {
        self.rows.min(self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows)
            .map(|r| self.data[r * self.cols + c])
            .collect()
    }

    /// Column-major copy, one `Vec` per column.
    pub fn to_columns(&self) -> Vec<Vec<f64>> {
        (0..self.cols).map(|c| self.column(c)).collect()
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|&v| v as f32).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    /// Leading `cols` columns.
    pub fn leading_columns(&self, cols: usize) -> Matrix {
        assert!(cols <= self.cols && cols > 0);
        Matrix::from_fn(self.rows, cols, |r, c| self[(r, c)])
    }

    /// Leading `rows` rows.
    pub fn leading_rows(&self, rows: usize) -> Matrix {
        assert!(rows <= self.rows && rows > 0);
        Matrix {
            rows,
            cols: self.cols,
            data: self.data[..rows * self.cols].to_vec(),
        }
    }

    pub fn scale(&self, factor: f64) -> Matrix {
        self.map(|v| v * factor)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Multiplies column `j` by `weights[j]`, i.e. `self * diag(weights)`.
    pub fn scale_columns(&self, weights: &[f64]) -> Matrix {
        assert_eq!(weights.len(), self.cols);
        let mut out = self.clone();
        for r in 0..self.rows {
            for (v, w) in out.row_mut(r).iter_mut().zip(weights) {
                *v *= w;
            }
        }
        out
    }

    /// Multiplies row `i` by `weights[i]`, i.e. `diag(weights) * self`.
    pub fn scale_rows(&self, weights: &[f64]) -> Matrix {
        assert_eq!(weights.len(), self.rows);
        let mut out = self.clone();
        for (r, w) in weights.iter().enumerate() {
            out.row_mut(r).iter_mut().for_each(|v| *v *= w);
        }
        out
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.squared_norm().sqrt()
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `‖self − other‖_F / ‖other‖_F`, or the absolute error when `other` is zero.
    pub fn relative_error(&self, reference: &Matrix) -> Result<f64> {
        let diff = self.sub(reference)?.frobenius_norm();
        let norm = reference.frobenius_norm();
        Ok(if norm > 0.0 { diff / norm } else { diff })
    }

    /// Matrix product `self * rhs`.
    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        let n = rhs.cols;
        let row_kernel = |r: usize, out_row: &mut [f64]| {
            for (k, &a) in self.row(r).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        };

        #[cfg(feature = "parallel")]
        if self.rows * self.cols * n >= PARALLEL_FLOP_THRESHOLD {
            use rayon::prelude::*;
            out.data
                .par_chunks_mut(n)
                .enumerate()
                .for_each(|(r, out_row)| row_kernel(r, out_row));
            return Ok(out);
        }

        for (r, out_row) in out.data.chunks_mut(n).enumerate() {
            row_kernel(r, out_row);
        }
        Ok(out)
    }

    /// `selfᵀ * rhs` without materialising the transpose.
    pub fn transpose_matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.rows != rhs.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply ({}x{})ᵀ by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        self.transpose().matmul(rhs)
    }

    /// Matrix of standard normal draws from the seeded generator, filled in
    /// row-major order.
    pub fn gaussian(rows: usize, cols: usize, seed: u64) -> Result<Matrix> {
        if rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch(format!(
                "gaussian matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        let mut rng = Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.next_normal()).collect();
        Ok(Matrix { rows, cols, data })
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

/// Row-major matrix of standard normals; see [`Matrix::gaussian`].
pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Result<Matrix> {
    Matrix::gaussian(rows, cols, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_product(a: &Matrix, b: &Matrix) -> Matrix {
        Matrix::from_fn(a.rows(), b.cols(), |i, j| {
            (0..a.cols()).map(|k| a[(i, k)] * b[(k, j)]).sum()
        })
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(matches!(
            Matrix::new(2, 2, vec![1.0; 3]),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            Matrix::new(0, 2, vec![]),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            Matrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn matmul_matches_naive_loop() {
        let a = gaussian_matrix(7, 5, 1).unwrap();
        let b = gaussian_matrix(5, 9, 2).unwrap();
        let p = a.matmul(&b).unwrap();
        assert!(p.sub(&naive_product(&a, &b)).unwrap().max_abs() < 1e-12);
        assert!(a.matmul(&a).is_err());
    }

    #[test]
    fn large_matmul_matches_naive_loop() {
        // Large enough to take the parallel path when the feature is on.
        let a = gaussian_matrix(96, 64, 3).unwrap();
        let b = gaussian_matrix(64, 96, 4).unwrap();
        let p = a.matmul(&b).unwrap();
        assert!(p.sub(&naive_product(&a, &b)).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn transpose_matmul_agrees() {
        let a = gaussian_matrix(6, 3, 5).unwrap();
        let b = gaussian_matrix(6, 4, 6).unwrap();
        let lhs = a.transpose_matmul(&b).unwrap();
        let rhs = a.transpose().matmul(&b).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn gaussian_is_deterministic_and_seed_sensitive() {
        assert_eq!(
            gaussian_matrix(2, 2, 42).unwrap(),
            gaussian_matrix(2, 2, 42).unwrap()
        );
        assert_ne!(
            gaussian_matrix(3, 4, 1).unwrap(),
            gaussian_matrix(3, 4, 2).unwrap()
        );
    }

    #[test]
    fn gaussian_moments() {
        let g = gaussian_matrix(1000, 1, 7).unwrap();
        let n = g.data().len() as f64;
        let mean = g.data().iter().sum::<f64>() / n;
        let var = g.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.15, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 0.1, "std {}", var.sqrt());
    }

    #[test]
    fn f32_round_trip_is_exact_for_f32_values() {
        let m = Matrix::from_f32(2, 2, &[0.1, -2.5, 3.0e-8, 7.0]).unwrap();
        assert_eq!(Matrix::from_f32(2, 2, &m.to_f32()).unwrap(), m);
    }
}
