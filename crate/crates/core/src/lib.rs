//! Estimation of the low-dimensional linear space spanned by the conditional
//! means of high-dimensional data, from second moments only.
//!
//! The observed `k x n` matrix `Y` (rows are variables, columns are samples)
//! is modelled as `E[Y | M] = Phi M` with `M` of rank `r < n`. The row space of
//! `M` is recovered from the leading eigenvectors of the adjusted gram matrix
//! `k^-1 Y^T Y - D`, where the diagonal `D` of column-average variances is
//! estimated without knowing any row-specific variance. For natural exponential
//! families with quadratic variance functions this is done through a transform
//! `v` with `E[v(y)] = Var[y]`.
//!
//! ```
//! use latentspec::{DataMatrix, Family, RankMode, estimate_dk_qvf, estimate_latent_space};
//!
//! let y = DataMatrix::from_rows(&[[3.0, 1.0, 4.0], [1.0, 5.0, 9.0], [2.0, 6.0, 5.0]]).unwrap();
//! let d = estimate_dk_qvf(&y, &Family::poisson()).unwrap();
//! let est = estimate_latent_space(&y, &d, &RankMode::Fixed(1)).unwrap();
//! assert_eq!(est.m_hat.shape(), (1, 3));
//! ```

pub mod error;
pub mod latent;
pub mod matrix;
pub mod metrics;
pub mod nef;
pub mod sim;
pub mod variance;

pub use error::{Error, Result};
pub use latent::{
    adjusted_gram, calibrate_scale, default_grid, estimate_latent_space, estimate_rank,
    estimate_rank_with_grid, subspace_from_eigen, subspace_with_decision, CalibrationTrace,
    RankDecision, RankEstimate, RankMode, Scale, ScalingConfig, SubspaceEstimate,
};
pub use matrix::{frobenius_norm, gram_scaled, sym_eigen, DataMatrix, Matrix, SymmetricEigen};
pub use metrics::{projection_matrix, subspace_distance, Distance, RowSpaceBasis};
pub use nef::{Family, FamilyKind, QvfCoefficients};
pub use variance::{dk_error, estimate_dk_leek, estimate_dk_qvf, VarianceEstimate, VarianceMethod};
