//! Estimators of the diagonal correction `D = diag(delta_1, ..., delta_n)` of
//! column-average variances.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{gram_scaled, neumaier_sum, sym_eigen, DataMatrix, EIGEN_TOL};
use crate::nef::{Family, FamilyKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum VarianceMethod {
    Qvf { family: Family },
    LeekNormal { t: usize },
    KnownUnit,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    pub deltas: Vec<f64>,
    pub method: VarianceMethod,
    /// Set when some estimated entry came out negative. Never clamped.
    pub negative_entries: bool,
}

impl VarianceEstimate {
    /// `D = I`, the correction for unit-variance Normal data.
    pub fn known_unit(n: usize) -> Self {
        VarianceEstimate {
            deltas: vec![1.0; n],
            method: VarianceMethod::KnownUnit,
            negative_entries: false,
        }
    }

    /// A user supplied diagonal.
    pub fn explicit(deltas: Vec<f64>) -> Result<Self> {
        if let Some(j) = deltas.iter().position(|d| !d.is_finite()) {
            return Err(Error::NonFinite { row: 0, col: j });
        }
        let negative_entries = deltas.iter().any(|&d| d < 0.0);
        Ok(VarianceEstimate {
            deltas,
            method: VarianceMethod::Explicit,
            negative_entries,
        })
    }

    /// No correction at all.
    pub fn zeros(n: usize) -> Self {
        VarianceEstimate {
            deltas: vec![0.0; n],
            method: VarianceMethod::Explicit,
            negative_entries: false,
        }
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }
}

/// Column means of `v(y_lj)`.
///
/// Each column's terms are summed in sorted order, so the result does not
/// depend on the order of the rows.
pub fn estimate_dk_qvf(y: &DataMatrix, f: &Family) -> Result<VarianceEstimate> {
    let (k, n) = (y.k(), y.n());
    let m = y.matrix();

    let mut bad = Vec::new();
    for i in 0..k {
        for (j, &x) in m.row(i).iter().enumerate() {
            if !f.in_support(x) {
                bad.push((i, j));
            }
        }
    }
    if !bad.is_empty() {
        return Err(Error::SupportViolation {
            family: f.to_string(),
            cells: bad,
        });
    }

    let deltas: Vec<f64> = if f.kind() == FamilyKind::Normal {
        vec![1.0; n]
    } else {
        (0..n)
            .into_par_iter()
            .map(|j| {
                let mut terms: Vec<f64> = (0..k).map(|i| f.v(m.get(i, j))).collect();
                terms.sort_unstable_by(f64::total_cmp);
                neumaier_sum(&terms) / k as f64
            })
            .collect()
    };

    let negative_entries = deltas.iter().any(|&d| d < 0.0);
    Ok(VarianceEstimate {
        deltas,
        method: VarianceMethod::Qvf { family: *f },
        negative_entries,
    })
}

/// Average-variance estimate for Normal rows with unknown row variances.
///
/// With singular values `a_1 >= ... >= a_n` of `Y`,
/// `sigma^2 = sum_{j=t}^{n} a_j^2 / (k (n - t))` (1-based), i.e. the
/// variation left after removing the top `t - 1` right singular vectors.
/// Every diagonal entry is set to `sigma^2`. `t` should exceed the latent
/// rank.
pub fn estimate_dk_leek(y: &DataMatrix, t: usize) -> Result<VarianceEstimate> {
    let n = y.n();
    if t == n {
        return Err(Error::DegenerateTail { t, n });
    }
    if t == 0 || t > n {
        return Err(Error::InvalidParameter(format!(
            "t must satisfy 1 <= t < n = {n}, got {t}"
        )));
    }
    // Eigenvalues of k^-1 Y^T Y are a_j^2 / k.
    let eig = sym_eigen(&gram_scaled(y), EIGEN_TOL)?;
    let tail: f64 = eig.values[t - 1..].iter().map(|&l| l.max(0.0)).sum();
    let sigma2 = tail / (n - t) as f64;
    Ok(VarianceEstimate {
        deltas: vec![sigma2; n],
        method: VarianceMethod::LeekNormal { t },
        negative_entries: false,
    })
}

/// `max_j |est_j - truth_j|`.
pub fn dk_error(est: &VarianceEstimate, truth: &[f64]) -> Result<f64> {
    if est.deltas.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            got: est.deltas.len(),
        });
    }
    Ok(est
        .deltas
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    #[test]
    fn qvf_examples() {
        let y = DataMatrix::from_rows(&[[2.0, 0.0], [4.0, 10.0]]).unwrap();
        let d = estimate_dk_qvf(&y, &Family::poisson()).unwrap();
        assert_eq!(d.deltas[0], 3.0);

        let d = estimate_dk_qvf(&y, &Family::binomial(20).unwrap()).unwrap();
        assert!((d.deltas[1] - 50.0 / 19.0).abs() < 1e-15);

        let z = DataMatrix::from_rows(&[[-1.5, 2.0, 1e6], [0.1, -3.0, 2.0]]).unwrap();
        let d = estimate_dk_qvf(&z, &Family::normal()).unwrap();
        assert_eq!(d.deltas, vec![1.0; 3]);
    }

    #[test]
    fn qvf_support_violation_lists_cells() {
        let y = DataMatrix::from_rows(&[[1.0, -1.0], [2.5, 3.0]]).unwrap();
        match estimate_dk_qvf(&y, &Family::poisson()) {
            Err(Error::SupportViolation { cells, .. }) => assert_eq!(cells, vec![(0, 1), (1, 0)]),
            other => panic!("unexpected {other:?}"),
        }
        let y = DataMatrix::from_rows(&[[21.0, 0.0]]).unwrap();
        assert!(estimate_dk_qvf(&y, &Family::binomial(20).unwrap()).is_err());
    }

    #[test]
    fn qvf_row_permutation_is_bit_exact() {
        let rows: Vec<[f64; 3]> = (0..257)
            .map(|i| {
                let i = i as f64;
                [(i * 0.37).sin().abs() + 0.1, (i * 1.3).cos().abs() + 0.2, i * 0.01 + 0.5]
            })
            .collect();
        let y = DataMatrix::from_rows(&rows).unwrap();
        let mut rev = rows.clone();
        rev.reverse();
        rev.swap(3, 100);
        let yr = DataMatrix::from_rows(&rev).unwrap();
        let f = Family::gamma(10.0).unwrap();
        let a = estimate_dk_qvf(&y, &f).unwrap();
        let b = estimate_dk_qvf(&yr, &f).unwrap();
        for (x, z) in a.deltas.iter().zip(&b.deltas) {
            assert_eq!(x.to_bits(), z.to_bits());
        }
    }

    #[test]
    fn leek_equal_singular_values() {
        // Rows c e_1, c e_2, c e_3 padded with zero rows: Y^T Y = c^2 I.
        let (k, n, c) = (6usize, 3usize, 2.0f64);
        let mut m = Matrix::zeros(k, n);
        for j in 0..n {
            m.set(j, j, c);
        }
        let y = DataMatrix::try_from(m).unwrap();
        for t in 1..n {
            let d = estimate_dk_leek(&y, t).unwrap();
            let want = c * c * (n - t + 1) as f64 / (k as f64 * (n - t) as f64);
            assert!((d.deltas[0] - want).abs() < 1e-12, "t={t}");
            assert!(d.deltas.iter().all(|&x| x == d.deltas[0]));
        }
    }

    #[test]
    fn leek_zero_and_errors() {
        let y = DataMatrix::new(4, 3, vec![0.0; 12]).unwrap();
        assert_eq!(estimate_dk_leek(&y, 1).unwrap().deltas, vec![0.0; 3]);
        assert_eq!(
            estimate_dk_leek(&y, 3),
            Err(Error::DegenerateTail { t: 3, n: 3 })
        );
        assert!(matches!(estimate_dk_leek(&y, 0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn dk_error_examples() {
        let e = VarianceEstimate::explicit(vec![1.0, 1.0]).unwrap();
        assert_eq!(dk_error(&e, &[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(dk_error(&e, &[1.0, 3.0]).unwrap(), 2.0);
        assert_eq!(
            dk_error(&e, &[1.0]),
            Err(Error::LengthMismatch { expected: 1, got: 2 })
        );
    }
}
