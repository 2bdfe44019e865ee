//! Small dense linear algebra: row-major matrices, products, spectral norms,
//! Gram inversion and row orthonormalization.
//!
//! Everything here is sized for desk-scale problems (a few hundred rows and
//! columns at most), so the kernels are plain loops over contiguous slices.

mod io;

pub use io::{
    read_matrix, read_matrix_csv, read_matrix_market, read_vector_csv, write_matrix_csv,
    write_matrix_market, write_vector_csv,
};

use std::ops::{Deref, Index};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Power iterations allowed before [`spectral_norm`] gives up.
pub const POWER_ITERATION_MAX_ITER: usize = 10_000;

/// Relative pivot size below which a Gram matrix is treated as singular.
pub const RANK_DEFICIENCY_THRESHOLD: f64 = 1e-10;

/// Relative residual norm below which a row counts as dependent during
/// orthonormalization.
pub const DEPENDENT_ROW_THRESHOLD: f64 = 1e-10;

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// A vector of finite reals.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite(&values)?;
        Ok(Self(values))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    /// Wraps values the caller has produced from finite inputs.
    pub(crate) fn from_trusted(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm2(&self) -> f64 {
        norm2(&self.0)
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

impl Deref for DenseVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for DenseVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

/// Row-major dense matrix of finite reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "matrix entries",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        check_finite(&data)?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    context: "matrix row length",
                    expected: cols,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), cols, data)
    }

    pub(crate) fn from_trusted(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        debug_assert!(data.iter().all(|v| v.is_finite()));
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

    pub fn diag(values: &[f64]) -> Result<Self> {
        check_finite(values)?;
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut out = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Self::from_trusted(self.cols, self.rows, out)
    }

    /// Submatrix made of the listed columns, in the listed order.
    pub fn select_columns(&self, columns: &[usize]) -> Result<Self> {
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.cols) {
            return Err(Error::DimensionMismatch {
                context: "column index",
                expected: self.cols,
                actual: bad,
            });
        }
        let mut data = Vec::with_capacity(self.rows * columns.len());
        for i in 0..self.rows {
            let row = self.row(i);
            data.extend(columns.iter().map(|&c| row[c]));
        }
        Ok(Self::from_trusted(self.rows, columns.len(), data))
    }

    /// Matrix product `self * other`.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                context: "matmul inner dimension",
                expected: self.cols,
                actual: other.rows,
            });
        }
        let mut out = vec![0.0; self.rows * other.cols];
        for i in 0..self.rows {
            let out_row = &mut out[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a != 0.0 {
                    for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                        *o += a * b;
                    }
                }
            }
        }
        Ok(Self::from_trusted(self.rows, other.cols, out))
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        assert!(i < self.rows && j < self.cols, "index out of bounds");
        &self.data[i * self.cols + j]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `out = A x` without shape checks.
pub(crate) fn gemv(a: &DenseMatrix, x: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = dot(a.row(i), x);
    }
}

/// `out = Aᵀ y` without shape checks.
pub(crate) fn gemv_t(a: &DenseMatrix, y: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for (i, &yi) in y.iter().enumerate() {
        if yi != 0.0 {
            for (o, &aij) in out.iter_mut().zip(a.row(i)) {
                *o += aij * yi;
            }
        }
    }
}

pub fn matvec(a: &DenseMatrix, x: &[f64]) -> Result<DenseVector> {
    if a.cols != x.len() {
        return Err(Error::DimensionMismatch {
            context: "matvec",
            expected: a.cols,
            actual: x.len(),
        });
    }
    let mut out = vec![0.0; a.rows];
    gemv(a, x, &mut out);
    Ok(DenseVector::from_trusted(out))
}

pub fn transpose_matvec(a: &DenseMatrix, y: &[f64]) -> Result<DenseVector> {
    if a.rows != y.len() {
        return Err(Error::DimensionMismatch {
            context: "transpose_matvec",
            expected: a.rows,
            actual: y.len(),
        });
    }
    let mut out = vec![0.0; a.cols];
    gemv_t(a, y, &mut out);
    Ok(DenseVector::from_trusted(out))
}

/// Spectral norm ‖A‖₂ by power iteration on AᵀA, with a relative tolerance.
pub fn spectral_norm(a: &DenseMatrix, tol: f64) -> Result<f64> {
    spectral_norm_with_limit(a, tol, POWER_ITERATION_MAX_ITER)
}

pub fn spectral_norm_with_limit(a: &DenseMatrix, tol: f64, max_iter: usize) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!("tolerance must be positive, got {tol}")));
    }
    if a.max_abs() == 0.0 {
        return Err(Error::Precondition("spectral norm of a zero matrix".into()));
    }
    let n = a.cols;
    let mut av = vec![0.0; a.rows];
    let mut w = vec![0.0; n];

    // Start from the normalized all-ones vector; if it happens to lie in the
    // null space, fall back to an alternating ramp.
    let mut u = vec![1.0 / (n as f64).sqrt(); n];
    gemv(a, &u, &mut av);
    if norm2(&av) <= 1e-12 * a.frobenius_norm() {
        u = (0..n)
            .map(|j| if j % 2 == 0 { (j + 1) as f64 } else { -((j + 1) as f64) })
            .collect();
        let s = norm2(&u);
        u.iter_mut().for_each(|v| *v /= s);
    }

    for _ in 0..max_iter {
        gemv(a, &u, &mut av);
        gemv_t(a, &av, &mut w);
        let rayleigh = dot(&u, &w);
        let wn = norm2(&w);
        if wn == 0.0 {
            return Err(Error::Numerical("power iteration collapsed to zero".into()));
        }
        let residual = w
            .iter()
            .zip(&u)
            .map(|(wi, ui)| (wi - rayleigh * ui).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= tol * rayleigh {
            return Ok(rayleigh.sqrt());
        }
        for (ui, wi) in u.iter_mut().zip(&w) {
            *ui = wi / wn;
        }
    }
    Err(Error::NotConverged {
        what: "power iteration",
        iterations: max_iter,
    })
}

/// Inverse of a small square matrix by Gauss–Jordan elimination with
/// partial pivoting.
pub fn invert_small(m: &DenseMatrix) -> Result<DenseMatrix> {
    let n = m.rows;
    if m.cols != n {
        return Err(Error::DimensionMismatch {
            context: "square matrix",
            expected: n,
            actual: m.cols,
        });
    }
    let w = 2 * n;
    let mut aug = vec![0.0; n * w];
    for i in 0..n {
        aug[i * w..i * w + n].copy_from_slice(m.row(i));
        aug[i * w + n + i] = 1.0;
    }
    let mut largest_pivot = 0.0_f64;
    for col in 0..n {
        let (pivot_row, pivot) = (col..n)
            .map(|r| (r, aug[r * w + col].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        largest_pivot = largest_pivot.max(pivot);
        let threshold = RANK_DEFICIENCY_THRESHOLD * largest_pivot;
        if pivot <= threshold || pivot == 0.0 {
            return Err(Error::RankDeficient { pivot, threshold });
        }
        if pivot_row != col {
            for j in 0..w {
                aug.swap(col * w + j, pivot_row * w + j);
            }
        }
        let p = aug[col * w + col];
        for j in 0..w {
            aug[col * w + j] /= p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = aug[r * w + col];
            if factor != 0.0 {
                for j in 0..w {
                    aug[r * w + j] -= factor * aug[col * w + j];
                }
            }
        }
    }
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        out.extend_from_slice(&aug[i * w + n..i * w + w]);
    }
    DenseMatrix::new(n, n, out).map_err(|_| Error::Numerical("non-finite inverse".into()))
}

/// Spectral norm of (BᵀB)⁻¹ for a tall matrix `b` with full column rank.
pub fn gram_inverse_norm(b: &DenseMatrix) -> Result<f64> {
    let gram = b.transpose().matmul(b)?;
    let inv = invert_small(&gram)?;
    spectral_norm(&inv, 1e-13)
}

/// Gram–Schmidt on the rows (two passes per row), returning a matrix with
/// orthonormal rows spanning the same row space.
pub fn orthonormalize_rows(a: &DenseMatrix) -> Result<DenseMatrix> {
    if a.rows > a.cols {
        return Err(Error::Precondition(format!(
            "cannot orthonormalize {} rows in dimension {}",
            a.rows, a.cols
        )));
    }
    let n = a.cols;
    let mut q: Vec<f64> = Vec::with_capacity(a.data.len());
    for i in 0..a.rows {
        let mut v = a.row(i).to_vec();
        let original = norm2(&v);
        for _pass in 0..2 {
            for k in 0..i {
                let qk = &q[k * n..(k + 1) * n];
                let c = dot(qk, &v);
                for (vj, qj) in v.iter_mut().zip(qk) {
                    *vj -= c * qj;
                }
            }
        }
        let remaining = norm2(&v);
        if original == 0.0 || remaining <= DEPENDENT_ROW_THRESHOLD * original {
            return Err(Error::DependentRows { row: i });
        }
        q.extend(v.iter().map(|vj| vj / remaining));
    }
    Ok(DenseMatrix::from_trusted(a.rows, n, q))
}
