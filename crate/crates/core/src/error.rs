use thiserror::Error;

/// Errors raised by the estimation pipeline and the simulation harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is not symmetric: max |a_ij - a_ji| = {max_asym:e} exceeds {limit:e}")]
    NotSymmetric { max_asym: f64, limit: f64 },

    #[error("eigensolver did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("dimension {n} exceeds the eigensolver cap of {cap}")]
    TooLarge { n: usize, cap: usize },

    #[error("value {value} is outside the admissible region of the {family} family")]
    OutOfSupport { family: String, value: f64 },

    #[error("{} entries outside the {family} support, first at ({}, {})", cells.len(), cells[0].0, cells[0].1)]
    SupportViolation {
        family: String,
        cells: Vec<(usize, usize)>,
    },

    #[error("residual tail is empty: t = {t} leaves no singular values out of n = {n}")]
    DegenerateTail { t: usize, n: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("calibration grid is empty")]
    EmptyGrid,

    #[error("calibration grid must be positive and strictly ascending")]
    InvalidGrid,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("basis is rank deficient (condition {condition:e})")]
    RankDeficient { condition: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
