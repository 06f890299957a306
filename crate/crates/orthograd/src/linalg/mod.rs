//! Dense f64 matrices and the decomposition kernel used on per-layer
//! gradient matrices: one-sided Jacobi SVD, nearest-orthonormal projection,
//! column normalisation, Frobenius norm and the cosine metric.
//!
//! Decompositions always run in 64-bit; training code casts down afterwards.

mod svd;

pub use svd::{nearest_orthonormal, svd, SvdResult};

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum LinalgError {
    /// Matrix with zero rows or columns, or shape/data length mismatch.
    EmptyMatrix,
    /// NaN or infinity in external input.
    NonFinite { row: usize, col: usize },
    /// Jacobi sweeps exhausted; carries the largest remaining relative
    /// off-diagonal Gram entry.
    NonConvergence { residual: f64, sweeps: usize },
    /// All-zero input where a direction is required.
    DegenerateInput,
    /// Zero-norm vector passed to the cosine metric.
    ZeroNorm,
    /// Incompatible operand shapes.
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
}

impl fmt::Display for LinalgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinalgError::EmptyMatrix => write!(f, "matrix must have at least one row and column"),
            LinalgError::NonFinite { row, col } => {
                write!(f, "non-finite entry at ({row}, {col})")
            }
            LinalgError::NonConvergence { residual, sweeps } => write!(
                f,
                "Jacobi SVD did not converge after {sweeps} sweeps (max relative off-diagonal {residual:.3e})"
            ),
            LinalgError::DegenerateInput => write!(f, "all-zero input has no direction"),
            LinalgError::ZeroNorm => write!(f, "cosine of a zero-norm vector is undefined"),
            LinalgError::ShapeMismatch { left, right } => {
                write!(f, "shape mismatch: {left:?} vs {right:?}")
            }
        }
    }
}

impl std::error::Error for LinalgError {}

/// Dense row-major f64 matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Build from row-major data, rejecting empty shapes, length mismatches
    /// and non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(LinalgError::EmptyMatrix);
        }
        for (i, &x) in data.iter().enumerate() {
            if !x.is_finite() {
                return Err(LinalgError::NonFinite {
                    row: i / cols,
                    col: i % cols,
                });
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self, LinalgError> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(LinalgError::EmptyMatrix);
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(LinalgError::EmptyMatrix);
            }
            data.extend_from_slice(r);
        }
        Self::from_vec(rows.len(), cols, data)
    }

    /// Internal constructor that skips the finite check; gradients may
    /// legitimately carry NaN on their way to a diagnosed step failure.
    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn transposed(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix, LinalgError> {
        if self.cols != rhs.rows {
            return Err(LinalgError::ShapeMismatch {
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                let row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                crate::scalar::axpy(dst, a, row);
            }
        }
        Ok(out)
    }

    pub fn scaled(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Largest absolute deviation of `selfᵀ·self` from the identity.
    pub fn gram_identity_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.cols {
            for j in i..self.cols {
                let mut dot = 0.0;
                for r in 0..self.rows {
                    dot += self.data[r * self.cols + i] * self.data[r * self.cols + j];
                }
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}

/// Frobenius norm.
pub fn frobenius_norm(g: &Matrix) -> f64 {
    g.data.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine metric x·y / (‖x‖‖y‖), clamped to [-1, 1]; zero-norm input is an
/// explicit error.
pub fn cosine(x: &[f64], y: &[f64]) -> Result<f64, LinalgError> {
    if x.len() != y.len() {
        return Err(LinalgError::ShapeMismatch {
            left: (x.len(), 1),
            right: (y.len(), 1),
        });
    }
    let nx = crate::scalar::dot(x, x).sqrt();
    let ny = crate::scalar::dot(y, y).sqrt();
    if nx == 0.0 || ny == 0.0 {
        return Err(LinalgError::ZeroNorm);
    }
    Ok((crate::scalar::dot(x, y) / (nx * ny)).clamp(-1.0, 1.0))
}

/// Scale every column with norm above `1e-12` to unit Euclidean norm;
/// smaller columns pass through unchanged.
pub fn normalise_columns(g: &Matrix) -> Matrix {
    const EPS: f64 = 1e-12;
    let mut out = g.clone();
    for c in 0..g.cols {
        let mut sq = 0.0;
        for r in 0..g.rows {
            let v = g.data[r * g.cols + c];
            sq += v * v;
        }
        let norm = sq.sqrt();
        if norm > EPS {
            let inv = 1.0 / norm;
            for r in 0..g.rows {
                out.data[r * g.cols + c] *= inv;
            }
        }
    }
    out
}
