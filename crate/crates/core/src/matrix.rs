//! Dense real matrices, the Frobenius norm, the scaled gram matrix and a
//! deterministic cyclic-Jacobi symmetric eigensolver.
//!
//! Everything downstream reduces to `n x n` problems where `n` is the number
//! of samples, so a plain row-major `Vec<f64>` and an `O(n^3)` Jacobi solver
//! are all that is needed.

use std::cmp::Ordering;
use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Default relative tolerance for symmetry checks and eigen invariants.
pub const EIGEN_TOL: f64 = 1e-10;

/// Default maximum number of Jacobi sweeps.
pub const MAX_SWEEPS: usize = 100;

/// Default cap on the dimension handed to [`sym_eigen`].
pub const DEFAULT_DIM_CAP: usize = 512;

/// Rows per block in the gram accumulation. Fixed so the reduction order does
/// not depend on the thread count.
const GRAM_BLOCK_ROWS: usize = 2048;

/// Dense row-major real matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::InvalidShape(format!(
                "{rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
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

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::InvalidShape(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
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

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::InvalidShape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (l, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(rhs.row(l)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn sub(&self, rhs: &Matrix) -> Result<Matrix> {
        self.zip_with(rhs, |a, b| a - b)
    }

    pub fn add(&self, rhs: &Matrix) -> Result<Matrix> {
        self.zip_with(rhs, |a, b| a + b)
    }

    fn zip_with(&self, rhs: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != rhs.shape() {
            return Err(Error::InvalidShape(format!(
                "shape mismatch {}x{} vs {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    /// Copy of the first `count` rows.
    pub fn top_rows(&self, count: usize) -> Matrix {
        let count = count.min(self.rows);
        Matrix {
            rows: count,
            cols: self.cols,
            data: self.data[..count * self.cols].to_vec(),
        }
    }

    /// Copy of the rows at `indices`, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute asymmetry `max |a_ij - a_ji|`, or `None` if not square.
    pub fn max_asymmetry(&self) -> Option<f64> {
        if self.rows != self.cols {
            return None;
        }
        let n = self.rows;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        Some(worst)
    }
}

/// Square root of the sum of squared entries.
///
/// The squares are summed in sorted order, so the value depends only on the
/// multiset of entries (in particular `|A|_F = |A^T|_F` exactly).
pub fn frobenius_norm(a: &Matrix) -> f64 {
    let mut sq: Vec<f64> = a.data.iter().map(|v| v * v).collect();
    sq.sort_unstable_by(f64::total_cmp);
    neumaier_sum(&sq).sqrt()
}

/// Compensated summation in the given order.
pub(crate) fn neumaier_sum(xs: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Observation matrix: `k` variables (rows) by `n` samples (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix(Matrix);

impl DataMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::try_from(Matrix::new(rows, cols, data)?)
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::try_from(Matrix::from_rows(rows)?)
    }

    /// Number of variables `k`.
    pub fn k(&self) -> usize {
        self.0.rows
    }

    /// Number of samples `n`.
    pub fn n(&self) -> usize {
        self.0.cols
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn select_rows(&self, indices: &[usize]) -> Result<DataMatrix> {
        DataMatrix::try_from(self.0.select_rows(indices))
    }
}

impl TryFrom<Matrix> for DataMatrix {
    type Error = Error;

    fn try_from(m: Matrix) -> Result<Self> {
        if m.rows < 1 || m.cols < 2 {
            return Err(Error::InvalidShape(format!(
                "data needs at least 1 row and 2 columns, got {}x{}",
                m.rows, m.cols
            )));
        }
        if let Some(pos) = m.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / m.cols,
                col: pos % m.cols,
            });
        }
        Ok(DataMatrix(m))
    }
}

/// `k^-1 Y^T Y`, exactly symmetric.
///
/// The upper triangle is accumulated over fixed row blocks (in parallel),
/// the block partials are summed in block order, divided by `k` once and
/// mirrored.
pub fn gram_scaled(y: &DataMatrix) -> Matrix {
    let m = y.matrix();
    let n = m.cols;
    let tri = n * (n + 1) / 2;

    let partials: Vec<Vec<f64>> = m
        .data
        .par_chunks(GRAM_BLOCK_ROWS * n)
        .map(|block| {
            let mut acc = vec![0.0; tri];
            for row in block.chunks_exact(n) {
                let mut idx = 0;
                for i in 0..n {
                    let yi = row[i];
                    for &yj in &row[i..] {
                        acc[idx] += yi * yj;
                        idx += 1;
                    }
                }
            }
            acc
        })
        .collect();

    let mut upper = vec![0.0; tri];
    for p in &partials {
        for (u, v) in upper.iter_mut().zip(p) {
            *u += v;
        }
    }

    let k = m.rows as f64;
    let mut g = Matrix::zeros(n, n);
    let mut idx = 0;
    for i in 0..n {
        for j in i..n {
            let v = upper[idx] / k;
            g.set(i, j, v);
            g.set(j, i, v);
            idx += 1;
        }
    }
    g
}

/// Eigendecomposition of a real symmetric matrix.
///
/// `values` are sorted descending and column `i` of `vectors` is the unit
/// eigenvector for `values[i]`. Each eigenvector is sign-fixed so its entry of
/// largest magnitude (lowest index on ties) is nonnegative; exactly equal
/// eigenvalues are ordered by their sign-fixed vectors, lexicographically
/// descending.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SymmetricEigen {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.vectors.col(i)
    }

    /// `V diag(values) V^T`.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.dim();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for (l, &lam) in self.values.iter().enumerate() {
                    s += self.vectors.get(i, l) * lam * self.vectors.get(j, l);
                }
                out.set(i, j, s);
                out.set(j, i, s);
            }
        }
        out
    }
}

/// Options for [`sym_eigen_with`].
#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    pub tol: f64,
    pub max_sweeps: usize,
    pub dim_cap: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: EIGEN_TOL,
            max_sweeps: MAX_SWEEPS,
            dim_cap: DEFAULT_DIM_CAP,
        }
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// `tol` is relative to `|A|_F`: the input is rejected if any
/// `|a_ij - a_ji|` exceeds `tol * |A|_F`.
pub fn sym_eigen(a: &Matrix, tol: f64) -> Result<SymmetricEigen> {
    sym_eigen_with(
        a,
        EigenOptions {
            tol,
            ..EigenOptions::default()
        },
    )
}

pub fn sym_eigen_with(a: &Matrix, opts: EigenOptions) -> Result<SymmetricEigen> {
    let n = a.rows;
    if a.cols != n {
        return Err(Error::InvalidShape(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    if n > opts.dim_cap {
        return Err(Error::TooLarge {
            n,
            cap: opts.dim_cap,
        });
    }
    if !a.is_finite() {
        let pos = a.data.iter().position(|v| !v.is_finite()).unwrap_or(0);
        return Err(Error::NonFinite {
            row: pos / n.max(1),
            col: pos % n.max(1),
        });
    }
    let norm = frobenius_norm(a);
    let max_asym = a.max_asymmetry().unwrap_or(0.0);
    let limit = opts.tol * norm;
    if max_asym > limit {
        return Err(Error::NotSymmetric { max_asym, limit });
    }

    // Work on the symmetrized copy.
    let mut w = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = 0.5 * (a.get(i, j) + a.get(j, i));
            w.set(i, j, v);
            w.set(j, i, v);
        }
    }
    let mut v = Matrix::identity(n);

    let stop = f64::EPSILON * norm;
    let mut converged = n < 2 || norm == 0.0;
    let mut sweep = 0;
    while !converged {
        if sweep == opts.max_sweeps {
            return Err(Error::NoConvergence {
                sweeps: opts.max_sweeps,
            });
        }
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = w.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = w.get(p, p);
                let aqq = w.get(q, q);
                // Skip elements that are negligible against both diagonals.
                if apq.abs() <= 0.5 * f64::EPSILON * (app.abs().min(aqq.abs()))
                    && sweep > 3
                {
                    w.set(p, q, 0.0);
                    w.set(q, p, 0.0);
                    continue;
                }
                rotated = true;
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.is_infinite() {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                jacobi_rotate(&mut w, p, q, c, s);
                w.set(p, p, app - t * apq);
                w.set(q, q, aqq + t * apq);
                w.set(p, q, 0.0);
                w.set(q, p, 0.0);
                for i in 0..n {
                    let vip = v.get(i, p);
                    let viq = v.get(i, q);
                    v.set(i, p, c * vip - s * viq);
                    v.set(i, q, s * vip + c * viq);
                }
            }
        }
        sweep += 1;
        converged = !rotated || off_diagonal_norm(&w) <= stop;
    }

    Ok(sorted_eigen(w.diag(), v))
}

/// Applies the rotation to rows/columns `p`, `q` of `w`, leaving the 2x2
/// block for the caller.
fn jacobi_rotate(w: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = w.rows;
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = w.get(k, p);
        let akq = w.get(k, q);
        let new_kp = c * akp - s * akq;
        let new_kq = s * akp + c * akq;
        w.set(k, p, new_kp);
        w.set(p, k, new_kp);
        w.set(k, q, new_kq);
        w.set(q, k, new_kq);
    }
}

fn off_diagonal_norm(w: &Matrix) -> f64 {
    let n = w.rows;
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            s += 2.0 * w.get(i, j) * w.get(i, j);
        }
    }
    s.sqrt()
}

fn sorted_eigen(values: Vec<f64>, vectors: Matrix) -> SymmetricEigen {
    let n = values.len();
    let mut columns: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|j| {
            let mut col = vectors.col(j);
            fix_sign(&mut col);
            (values[j], col)
        })
        .collect();

    columns.sort_by(|a, b| match b.0.total_cmp(&a.0) {
        Ordering::Equal => lex_cmp(&b.1, &a.1),
        ord => ord,
    });

    let mut out = Matrix::zeros(n, n);
    for (j, (_, col)) in columns.iter().enumerate() {
        for (i, &x) in col.iter().enumerate() {
            out.set(i, j, x);
        }
    }
    SymmetricEigen {
        values: columns.into_iter().map(|(v, _)| v).collect(),
        vectors: out,
    }
}

/// Flips `v` so that its largest-magnitude entry (first on ties) is >= 0.
pub fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal)
}

/// Euclidean norm of a vector.
pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
