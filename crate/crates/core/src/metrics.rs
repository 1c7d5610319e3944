//! Comparison of row spaces: projections and the distance `d(M, M_hat)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{frobenius_norm, sym_eigen, Matrix, EIGEN_TOL};

/// Smallest admissible ratio of extreme singular values of a basis.
pub const RANK_TOL: f64 = 1e-10;
/// Largest admissible condition number of `B B^T` when it must be inverted.
pub const MAX_CONDITION: f64 = 1e12;
/// Tolerance on `|B B^T - I|_F` for a basis to count as orthonormal.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// A full-row-rank `r x n` matrix standing for its row space.
#[derive(Debug, Clone, PartialEq)]
pub struct RowSpaceBasis {
    matrix: Matrix,
    orthonormal: bool,
    condition: f64,
}

impl RowSpaceBasis {
    pub fn new(matrix: Matrix) -> Result<Self> {
        let (r, n) = matrix.shape();
        if r == 0 || n == 0 {
            return Err(Error::InvalidShape(format!(
                "a basis needs at least one row and column, got {r}x{n}"
            )));
        }
        if !matrix.is_finite() {
            let pos = matrix.as_slice().iter().position(|v| !v.is_finite()).unwrap_or(0);
            return Err(Error::NonFinite {
                row: pos / n,
                col: pos % n,
            });
        }
        let gram = matrix.matmul(&matrix.transpose())?;
        let eig = sym_eigen(&gram, EIGEN_TOL)?;
        let top = eig.values[0];
        let bottom = eig.values[r - 1];
        let condition = if bottom > 0.0 { top / bottom } else { f64::INFINITY };
        if r > n || !(top > 0.0) || !(bottom > 0.0) || (bottom / top).sqrt() <= RANK_TOL {
            return Err(Error::RankDeficient { condition });
        }
        let orthonormal = frobenius_norm(&gram.sub(&Matrix::identity(r))?) <= ORTHONORMAL_TOL;
        Ok(RowSpaceBasis {
            matrix,
            orthonormal,
            condition,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn rank(&self) -> usize {
        self.matrix.rows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn is_orthonormal(&self) -> bool {
        self.orthonormal
    }

    /// Condition number of `B B^T`.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// Same space with every row scaled to unit Euclidean norm.
    pub fn normalized_rows(&self) -> Result<Self> {
        let mut m = self.matrix.clone();
        for i in 0..m.rows() {
            let row = m.row_mut(i);
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            row.iter_mut().for_each(|x| *x /= norm);
        }
        RowSpaceBasis::new(m)
    }

    /// `(B B^T)^-1`, rejecting bases whose gram is too ill conditioned.
    fn gram_inverse(&self) -> Result<Matrix> {
        if self.condition > MAX_CONDITION {
            return Err(Error::RankDeficient {
                condition: self.condition,
            });
        }
        let r = self.rank();
        let gram = self.matrix.matmul(&self.matrix.transpose())?;
        let eig = sym_eigen(&gram, EIGEN_TOL)?;
        let mut inv = Matrix::zeros(r, r);
        for i in 0..r {
            for j in i..r {
                let mut s = 0.0;
                for (l, &lam) in eig.values.iter().enumerate() {
                    s += eig.vectors.get(i, l) * eig.vectors.get(j, l) / lam;
                }
                inv.set(i, j, s);
                inv.set(j, i, s);
            }
        }
        Ok(inv)
    }
}

/// Orthogonal projection `B^T (B B^T)^-1 B` onto the row space.
pub fn projection_matrix(b: &RowSpaceBasis) -> Result<Matrix> {
    let bt = b.matrix.transpose();
    let p = if b.orthonormal {
        bt.matmul(&b.matrix)?
    } else {
        bt.matmul(&b.gram_inverse()?)?.matmul(&b.matrix)?
    };
    // Symmetrize exactly.
    let n = p.rows();
    let mut out = p.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (p.get(i, j) + p.get(j, i));
            out.set(i, j, v);
            out.set(j, i, v);
        }
    }
    Ok(out)
}

/// Value of `d(M, M_hat)` plus whether `M_hat` had orthonormal rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distance {
    pub d: f64,
    pub m_hat_orthonormal: bool,
}

/// `d(M, M_hat) = (n r_hat)^-1/2 sqrt(|M^T - M_hat^T M_V|^2 + |M_hat^T - M^T V_M|^2)`
/// with `M_V = M_hat M^T` and `V_M = (M M^T)^-1 M M_hat^T`.
///
/// `M` may be any full-rank basis. `M_hat` is expected to have orthonormal
/// rows; otherwise the value is still computed and the returned flag is false.
pub fn subspace_distance(m: &RowSpaceBasis, m_hat: &RowSpaceBasis) -> Result<Distance> {
    let n = m.dim();
    if m_hat.dim() != n {
        return Err(Error::InvalidShape(format!(
            "column counts differ: {} vs {}",
            n,
            m_hat.dim()
        )));
    }
    let mm = &m.matrix;
    let mh = &m_hat.matrix;
    let mt = mm.transpose();
    let mht = mh.transpose();

    let m_v = mh.matmul(&mt)?;
    let v_m = m.gram_inverse()?.matmul(&mm.matmul(&mht)?)?;

    let t1 = frobenius_norm(&mt.sub(&mht.matmul(&m_v)?)?);
    let t2 = frobenius_norm(&mht.sub(&mt.matmul(&v_m)?)?);
    let r_hat = m_hat.rank() as f64;
    let d = (t1 * t1 + t2 * t2).sqrt() / (n as f64 * r_hat).sqrt();
    Ok(Distance {
        d,
        m_hat_orthonormal: m_hat.orthonormal,
    })
}
