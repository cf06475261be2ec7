//! Row-major dense matrices with a jittered Cholesky solver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense matrix in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch { left: rows * cols, right: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from row slices; all rows must share one length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::LengthMismatch { left: c, right: row.len() });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { rows: r, cols: c, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1))
    }

    /// Selects a subset of rows, preserving the given index order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self { rows: idx.len(), cols: self.cols, data }
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let a = self.get(i, j);
                let b = self.get(j, i);
                let scale = a.abs().max(b.abs()).max(1.0);
                if (a - b).abs() > rel_tol * scale {
                    return false;
                }
            }
        }
        true
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch { expected: self.cols, got: v.len() });
        }
        Ok(self
            .row_iter()
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }
}

/// Cholesky factorization of an SPD matrix with escalating diagonal jitter.
///
/// Jitter starts at `1e-6 * mean(diag)` and escalates tenfold up to three
/// times before giving up with [`Error::NotPositiveDefinite`].
#[derive(Debug, Clone)]
pub struct SpdSolver {
    lower: Vec<f64>,
    n: usize,
    log_det: f64,
}

impl SpdSolver {
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::DimensionMismatch { expected: a.rows(), got: a.cols() });
        }
        if !a.is_symmetric(1e-9) {
            return Err(Error::InvalidConfig("Cholesky input is not symmetric".into()));
        }
        let n = a.rows();
        let mean_diag = (0..n).map(|i| a.get(i, i)).sum::<f64>() / n.max(1) as f64;
        let base = 1e-6 * mean_diag.abs().max(f64::MIN_POSITIVE);
        let mut jitter = 0.0;
        for attempt in 0..=3 {
            if attempt > 0 {
                jitter = base * 10f64.powi(attempt - 1);
            }
            if let Some(solver) = Self::try_factor(a, jitter) {
                return Ok(solver);
            }
        }
        Err(Error::NotPositiveDefinite)
    }

    fn try_factor(a: &DenseMatrix, jitter: f64) -> Option<Self> {
        let n = a.rows();
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = a.get(i, j);
                if i == j {
                    sum += jitter;
                }
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if !(sum > 0.0) || !sum.is_finite() {
                        return None;
                    }
                    l[i * n + i] = sum.sqrt();
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        let log_det = 2.0 * (0..n).map(|i| l[i * n + i].ln()).sum::<f64>();
        Some(Self { lower: l, n, log_det })
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `L z = b` (forward substitution).
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut z = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                z[i] -= self.lower[i * n + k] * z[k];
            }
            z[i] /= self.lower[i * n + i];
        }
        z
    }

    /// Solves `A x = b` via the two triangular solves.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = self.solve_lower(b);
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                x[i] -= self.lower[k * n + i] * x[k];
            }
            x[i] /= self.lower[i * n + i];
        }
        x
    }

    /// Draws `L z` for a standard-normal `z`, i.e., a sample with covariance `A`.
    pub fn correlate(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut s = 0.0;
            for k in 0..=i {
                s += self.lower[i * n + k] * z[k];
            }
            out[i] = s;
        }
        out
    }
}

/// Solves `A X = B` for SPD `A`, returning the solutions and `log|A|`.
pub fn cholesky_logdet_solve(a: &DenseMatrix, b: &DenseMatrix) -> Result<(DenseMatrix, f64)> {
    if a.rows() != b.rows() {
        return Err(Error::DimensionMismatch { expected: a.rows(), got: b.rows() });
    }
    let solver = SpdSolver::new(a)?;
    let mut out = DenseMatrix::zeros(b.rows(), b.cols());
    let mut col = vec![0.0; b.rows()];
    for j in 0..b.cols() {
        for i in 0..b.rows() {
            col[i] = b.get(i, j);
        }
        let x = solver.solve(&col);
        for i in 0..b.rows() {
            out.set(i, j, x[i]);
        }
    }
    Ok((out, solver.log_det()))
}
