//! Adjusted gram matrix, rank selection and the latent-space estimator.
//!
//! The estimator computes `R = k^-1 Y^T Y - D`, takes its eigendecomposition
//! `R = V K V^T`, counts the eigenvalues `alpha_i` with
//! `alpha_i / tau > c_tilde` where `tau = c_k k^-eta`, and returns the leading
//! eigenvectors as the rows of `M_hat`.
//!
//! The scale `c_k` may be given or calibrated from the spectrum. Calibration
//! scans a log-spaced grid of thresholds between the noise floor of the
//! spectrum and its largest eigenvalue, and settles on the middle of the
//! widest range of thresholds that all produce the same rank.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::matrix::{gram_scaled, sym_eigen, DataMatrix, Matrix, SymmetricEigen, EIGEN_TOL};
use crate::variance::VarianceEstimate;

/// Default exponent of the scaling sequence `tau = c_k k^-eta`.
pub const ETA_DEFAULT: f64 = 1.0 / 3.0;
/// Faster-decaying preset, suited to many samples (`n = 100`).
pub const ETA_FAST: f64 = 1.0 / 1.1;
/// Intermediate preset.
pub const ETA_MEDIUM: f64 = 1.0 / 1.5;

/// Number of points in the default calibration grid.
pub const DEFAULT_GRID_POINTS: usize = 40;

/// The scale coefficient `c_k`: a literal value or calibrated from the data.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Scale {
    #[default]
    Auto,
    Value(f64),
}

impl Serialize for Scale {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Scale::Auto => s.serialize_str("auto"),
            Scale::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Scale {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Word(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(Scale::Value(v)),
            Repr::Word(w) if w.eq_ignore_ascii_case("auto") => Ok(Scale::Auto),
            Repr::Word(w) => Err(serde::de::Error::custom(format!(
                "scale must be \"auto\" or a positive number, got \"{w}\""
            ))),
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scale::Auto => f.write_str("auto"),
            Scale::Value(v) => write!(f, "{v}"),
        }
    }
}

/// Threshold `c_tilde`, exponent `eta` and scale `c_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    #[serde(default = "default_c_tilde")]
    pub c_tilde: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub scale: Scale,
}

fn default_c_tilde() -> f64 {
    1.0
}

fn default_eta() -> f64 {
    ETA_DEFAULT
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            c_tilde: 1.0,
            eta: ETA_DEFAULT,
            scale: Scale::Auto,
        }
    }
}

impl ScalingConfig {
    pub fn with_eta(eta: f64) -> Self {
        ScalingConfig {
            eta,
            ..ScalingConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_tilde.is_finite() && self.c_tilde > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "c_tilde must be positive, got {}",
                self.c_tilde
            )));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "eta must lie in (0, 1], got {}",
                self.eta
            )));
        }
        if let Scale::Value(v) = self.scale {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "scale coefficient must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// `tau = c_k k^-eta`.
    pub fn tau(&self, scale_coefficient: f64, k: usize) -> f64 {
        scale_coefficient * (k as f64).powf(-self.eta)
    }
}

/// Record of a calibration scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTrace {
    /// Candidate scale coefficients, ascending.
    pub grid: Vec<f64>,
    /// Rank obtained at each grid value.
    pub r_hats: Vec<usize>,
    /// Inclusive index range of the chosen plateau.
    pub plateau: Option<(usize, usize)>,
    /// The selected scale coefficient.
    pub chosen: f64,
    /// True when no plateau with `1 <= r < n` exists and `c_k = 1` was used.
    pub no_plateau: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEstimate {
    pub r_hat: usize,
    /// All `n` eigenvalues of the adjusted gram matrix, descending.
    pub eigenvalues: Vec<f64>,
    /// `eigenvalues / tau`.
    pub scaled_eigenvalues: Vec<f64>,
    pub tau_tilde: f64,
    pub scale_coefficient: f64,
    pub threshold: f64,
    pub eta: f64,
    pub k: usize,
    pub calibration: Option<CalibrationTrace>,
}

/// How many eigenvectors to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankMode {
    Auto(ScalingConfig),
    Fixed(usize),
}

impl Default for RankMode {
    fn default() -> Self {
        RankMode::Auto(ScalingConfig::default())
    }
}

/// Where the retained rank came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RankDecision {
    Estimated(RankEstimate),
    Fixed { r: usize },
}

impl RankDecision {
    pub fn rank(&self) -> usize {
        match self {
            RankDecision::Estimated(e) => e.r_hat,
            RankDecision::Fixed { r } => *r,
        }
    }
}

/// The estimated latent row space.
///
/// An empty estimate (zero rows) is a legitimate outcome when the automatic
/// rank selection finds no eigenvalue above the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceEstimate {
    /// `r_hat x n`, orthonormal rows.
    pub m_hat: Matrix,
    /// The `r_hat` leading eigenvalues.
    pub eigenvalues: Vec<f64>,
    /// Every eigenvalue of the adjusted gram matrix.
    pub all_eigenvalues: Vec<f64>,
    pub rank: RankDecision,
}

impl SubspaceEstimate {
    pub fn r_hat(&self) -> usize {
        self.m_hat.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.m_hat.rows() == 0
    }
}

/// `k^-1 Y^T Y - diag(d)`.
pub fn adjusted_gram(y: &DataMatrix, d: &VarianceEstimate) -> Result<Matrix> {
    if d.deltas.len() != y.n() {
        return Err(Error::LengthMismatch {
            expected: y.n(),
            got: d.deltas.len(),
        });
    }
    let mut g = gram_scaled(y);
    for (j, &dj) in d.deltas.iter().enumerate() {
        g.set(j, j, g.get(j, j) - dj);
    }
    Ok(g)
}

fn count_above(values: &[f64], tau: f64, c_tilde: f64) -> usize {
    values.iter().filter(|&&a| a / tau > c_tilde).count()
}

/// Threshold-count rank estimate on a descending eigenvalue vector.
pub fn estimate_rank(eig: &SymmetricEigen, k: usize, cfg: &ScalingConfig) -> Result<RankEstimate> {
    rank_from_values(&eig.values, k, cfg, None)
}

/// [`estimate_rank`] with an explicit calibration grid (in `c_k` units).
pub fn estimate_rank_with_grid(
    eig: &SymmetricEigen,
    k: usize,
    cfg: &ScalingConfig,
    grid: &[f64],
) -> Result<RankEstimate> {
    rank_from_values(&eig.values, k, cfg, Some(grid))
}

fn rank_from_values(
    values: &[f64],
    k: usize,
    cfg: &ScalingConfig,
    grid: Option<&[f64]>,
) -> Result<RankEstimate> {
    cfg.validate()?;
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let (scale_coefficient, calibration) = match cfg.scale {
        Scale::Value(v) => (v, None),
        Scale::Auto => {
            let trace = calibrate_scale(values, k, cfg, grid)?;
            (trace.chosen, Some(trace))
        }
    };
    let tau = cfg.tau(scale_coefficient, k);
    let scaled: Vec<f64> = values.iter().map(|a| a / tau).collect();
    let r_hat = count_above(values, tau, cfg.c_tilde);
    Ok(RankEstimate {
        r_hat,
        eigenvalues: values.to_vec(),
        scaled_eigenvalues: scaled,
        tau_tilde: tau,
        scale_coefficient,
        threshold: cfg.c_tilde,
        eta: cfg.eta,
        k,
        calibration,
    })
}

/// Default calibration grid in `c_k` units.
///
/// Thresholds on the eigenvalue scale run log-uniformly from the noise floor
/// to the largest eigenvalue. The noise floor is the magnitude of the most
/// negative eigenvalue when there is one, else the smallest positive
/// eigenvalue. A threshold `t` corresponds to `c_k = t k^eta / c_tilde`.
pub fn default_grid(values: &[f64], k: usize, cfg: &ScalingConfig) -> Vec<f64> {
    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(top > 0.0) {
        return Vec::new();
    }
    let bottom = values.iter().copied().fold(f64::INFINITY, f64::min);
    let min_pos = values
        .iter()
        .copied()
        .filter(|&v| v > 0.0)
        .fold(f64::INFINITY, f64::min);
    let floor = if bottom < 0.0 { -bottom } else { min_pos };
    let to_scale = (k as f64).powf(cfg.eta) / cfg.c_tilde;

    if floor >= top {
        return vec![top * to_scale];
    }
    let (lo, hi) = (floor.ln(), top.ln());
    let last = (DEFAULT_GRID_POINTS - 1) as f64;
    let mut grid: Vec<f64> = (0..DEFAULT_GRID_POINTS)
        .map(|i| (lo + (hi - lo) * i as f64 / last).exp() * to_scale)
        .collect();
    grid.dedup();
    grid
}

/// Picks `c_k` from the widest run of grid values sharing one rank
/// `1 <= r < n`. Ties go to the run with larger `c_k`. The chosen value is the
/// geometric midpoint of the run's end points. With no such run, `c_k = 1`.
///
/// `grid`, when given, must be non-empty, positive and strictly ascending;
/// `None` uses [`default_grid`].
pub fn calibrate_scale(
    values: &[f64],
    k: usize,
    cfg: &ScalingConfig,
    grid: Option<&[f64]>,
) -> Result<CalibrationTrace> {
    let grid = match grid {
        Some(g) => {
            if g.is_empty() {
                return Err(Error::EmptyGrid);
            }
            let positive = g.iter().all(|v| v.is_finite() && *v > 0.0);
            if !positive || g.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidGrid);
            }
            g.to_vec()
        }
        None => default_grid(values, k, cfg),
    };
    let n = values.len();
    let r_hats: Vec<usize> = grid
        .iter()
        .map(|&c| count_above(values, cfg.tau(c, k), cfg.c_tilde))
        .collect();

    let mut best: Option<(usize, usize)> = None;
    let mut i = 0;
    while i < r_hats.len() {
        let mut j = i;
        while j + 1 < r_hats.len() && r_hats[j + 1] == r_hats[i] {
            j += 1;
        }
        let r = r_hats[i];
        if r >= 1 && r < n && best.is_none_or(|(a, b)| j - i >= b - a) {
            best = Some((i, j));
        }
        i = j + 1;
    }

    let chosen = match best {
        Some((a, b)) => (grid[a] * grid[b]).sqrt(),
        None => 1.0,
    };
    Ok(CalibrationTrace {
        grid,
        r_hats,
        plateau: best,
        chosen,
        no_plateau: best.is_none(),
    })
}

/// Keeps the leading eigenvectors of an already decomposed adjusted gram.
pub fn subspace_from_eigen(
    eig: &SymmetricEigen,
    k: usize,
    mode: &RankMode,
) -> Result<SubspaceEstimate> {
    let n = eig.dim();
    let rank = match *mode {
        RankMode::Fixed(r) => {
            if r == 0 || r > n {
                return Err(Error::InvalidParameter(format!(
                    "fixed rank must satisfy 1 <= r <= n = {n}, got {r}"
                )));
            }
            RankDecision::Fixed { r }
        }
        RankMode::Auto(cfg) => RankDecision::Estimated(estimate_rank(eig, k, &cfg)?),
    };
    Ok(subspace_with_decision(eig, rank))
}

/// Keeps as many leading eigenvectors as `rank` says (at most `n`).
pub fn subspace_with_decision(eig: &SymmetricEigen, rank: RankDecision) -> SubspaceEstimate {
    let n = eig.dim();
    let r = rank.rank().min(n);
    let mut m_hat = Matrix::zeros(r, n);
    for i in 0..r {
        for j in 0..n {
            m_hat.set(i, j, eig.vectors.get(j, i));
        }
    }
    SubspaceEstimate {
        m_hat,
        eigenvalues: eig.values[..r].to_vec(),
        all_eigenvalues: eig.values.clone(),
        rank,
    }
}

/// Adjusted gram, eigendecomposition, rank choice and eigenvector selection.
pub fn estimate_latent_space(
    y: &DataMatrix,
    d: &VarianceEstimate,
    mode: &RankMode,
) -> Result<SubspaceEstimate> {
    let r = adjusted_gram(y, d)?;
    let eig = sym_eigen(&r, EIGEN_TOL)?;
    subspace_from_eigen(&eig, y.k(), mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::frobenius_norm;
    use proptest::prelude::*;

    fn eig_of(values: &[f64]) -> SymmetricEigen {
        sym_eigen(&Matrix::from_diag(values), EIGEN_TOL).unwrap()
    }

    #[test]
    fn adjusted_gram_examples() {
        let s = 2f64.sqrt();
        let y = DataMatrix::from_rows(&[[s, 0.0], [0.0, s]]).unwrap();
        let d = VarianceEstimate::explicit(vec![1.0, 1.0]).unwrap();
        let r = adjusted_gram(&y, &d).unwrap();
        assert!(frobenius_norm(&r) < 1e-15);

        let y = DataMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let r = adjusted_gram(&y, &VarianceEstimate::zeros(2)).unwrap();
        assert_eq!(r, gram_scaled(&y));
        assert!(adjusted_gram(&y, &VarianceEstimate::zeros(3)).is_err());
    }

    #[test]
    fn rank_threshold_examples() {
        let e = eig_of(&[5.0, 3.0, 0.001, 1e-5]);
        // tau = c_k k^-eta = 0.1 with k = 1.
        let cfg = ScalingConfig {
            c_tilde: 1.0,
            eta: 1.0,
            scale: Scale::Value(0.1),
        };
        let r = estimate_rank(&e, 1, &cfg).unwrap();
        assert_eq!(r.r_hat, 2);
        assert!((r.tau_tilde - 0.1).abs() < 1e-16);
        assert!(r.calibration.is_none());

        let z = eig_of(&[0.0; 4]);
        assert_eq!(estimate_rank(&z, 100, &cfg).unwrap().r_hat, 0);
        let auto = ScalingConfig::default();
        assert_eq!(estimate_rank(&z, 100, &auto).unwrap().r_hat, 0);
    }

    #[test]
    fn ties_at_threshold_are_excluded() {
        let e = eig_of(&[2.0, 1.0, 0.5]);
        let cfg = ScalingConfig {
            c_tilde: 1.0,
            eta: 1.0,
            scale: Scale::Value(1.0),
        };
        assert_eq!(estimate_rank(&e, 1, &cfg).unwrap().r_hat, 1);
    }

    #[test]
    fn negative_eigenvalues_never_counted() {
        let e = eig_of(&[-1.0, -2.0, -3.0]);
        let cfg = ScalingConfig {
            c_tilde: 1e-300,
            eta: 1.0,
            scale: Scale::Value(1.0),
        };
        assert_eq!(estimate_rank(&e, 10, &cfg).unwrap().r_hat, 0);
    }

    #[test]
    fn calibration_finds_widest_plateau() {
        let values = [5.0, 3.0, 0.001, 1e-5];
        let cfg = ScalingConfig::default();
        let k = 10_000;
        let trace = calibrate_scale(&values, k, &cfg, None).unwrap();
        assert!(!trace.no_plateau);
        let (a, b) = trace.plateau.unwrap();
        assert_eq!(trace.r_hats[a], 2);
        // Every other run is shorter.
        let mut runs: Vec<(usize, usize)> = Vec::new();
        for r in &trace.r_hats {
            match runs.last_mut() {
                Some((rr, len)) if rr == r => *len += 1,
                _ => runs.push((*r, 1)),
            }
        }
        let longest_other = runs
            .iter()
            .filter(|(r, _)| *r != 2 && *r >= 1 && *r < 4)
            .map(|(_, l)| *l)
            .max()
            .unwrap_or(0);
        assert!(b - a + 1 > longest_other);
        let e = eig_of(&values);
        assert_eq!(estimate_rank(&e, k, &cfg).unwrap().r_hat, 2);
    }

    #[test]
    fn calibration_without_separation_falls_back() {
        let trace = calibrate_scale(&[1.0; 4], 1000, &ScalingConfig::default(), None).unwrap();
        assert!(trace.no_plateau);
        assert_eq!(trace.chosen, 1.0);
    }

    #[test]
    fn calibration_grid_validation() {
        let cfg = ScalingConfig::default();
        assert_eq!(
            calibrate_scale(&[1.0, 0.5], 10, &cfg, Some(&[])),
            Err(Error::EmptyGrid)
        );
        assert_eq!(
            calibrate_scale(&[1.0, 0.5], 10, &cfg, Some(&[2.0, 1.0])),
            Err(Error::InvalidGrid)
        );
        assert_eq!(
            calibrate_scale(&[1.0, 0.5], 10, &cfg, Some(&[0.0, 1.0])),
            Err(Error::InvalidGrid)
        );
    }

    #[test]
    fn calibration_tie_prefers_larger_scale() {
        // Grid in tau units with k = 1, eta = 1: runs r=2 (2 points), r=1 (2 points).
        let cfg = ScalingConfig {
            c_tilde: 1.0,
            eta: 1.0,
            scale: Scale::Auto,
        };
        let grid = [1.0, 2.0, 4.0, 6.0];
        let t = calibrate_scale(&[10.0, 3.0, 0.5], 1, &cfg, Some(&grid)).unwrap();
        assert_eq!(t.r_hats, vec![2, 2, 1, 1]);
        assert_eq!(t.plateau, Some((2, 3)));
        assert!((t.chosen - 24f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn fixed_rank_diagonal() {
        // R = diag(4, 0, 0) from Y = 2 sqrt(3) e_1 in 3 rows and D = 0.
        let c = 12f64.sqrt();
        let y = DataMatrix::from_rows(&[[c, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]).unwrap();
        let est = estimate_latent_space(&y, &VarianceEstimate::zeros(3), &RankMode::Fixed(1)).unwrap();
        assert_eq!(est.m_hat.row(0), &[1.0, 0.0, 0.0]);
        assert!((est.eigenvalues[0] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn fixed_rank_noiseless_rank_one() {
        let m = [1.0, -2.0, 0.5, 3.0];
        let phi = [0.3, 1.2, -0.7, 2.0, 0.1];
        let rows: Vec<Vec<f64>> = phi.iter().map(|p| m.iter().map(|x| p * x).collect()).collect();
        let y = DataMatrix::from_rows(&rows).unwrap();
        let est = estimate_latent_space(&y, &VarianceEstimate::zeros(4), &RankMode::Fixed(1)).unwrap();
        let norm = m.iter().map(|x| x * x).sum::<f64>().sqrt();
        let row = est.m_hat.row(0);
        let sign = if row[3] < 0.0 { -1.0 } else { 1.0 };
        for (a, b) in row.iter().zip(&m) {
            assert!((sign * a - b / norm).abs() < 1e-8);
        }
    }

    #[test]
    fn empty_subspace_and_bad_fixed_rank() {
        let y = DataMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let d = VarianceEstimate::explicit(vec![0.5, 0.5]).unwrap();
        let est = estimate_latent_space(&y, &d, &RankMode::Auto(ScalingConfig::default())).unwrap();
        assert!(est.is_empty());
        assert_eq!(est.all_eigenvalues.len(), 2);
        assert!(estimate_latent_space(&y, &d, &RankMode::Fixed(0)).is_err());
        assert!(estimate_latent_space(&y, &d, &RankMode::Fixed(3)).is_err());
    }

    #[test]
    fn scaling_config_serde() {
        let c: ScalingConfig =
            serde_json::from_str(r#"{"c_tilde":1.0,"eta":0.3333,"scale":"auto"}"#).unwrap();
        assert_eq!(c.scale, Scale::Auto);
        assert_eq!(c.eta, 0.3333);
        let c: ScalingConfig = serde_json::from_str(r#"{"scale":2.5}"#).unwrap();
        assert_eq!(c.scale, Scale::Value(2.5));
        assert_eq!(c.eta, ETA_DEFAULT);
        let s = serde_json::to_string(&ScalingConfig::default()).unwrap();
        assert!(s.contains(r#""scale":"auto""#));
        assert!(serde_json::from_str::<ScalingConfig>(r#"{"scale":"manual"}"#).is_err());
        assert!(ScalingConfig::with_eta(0.0).validate().is_err());
        assert!(ScalingConfig::with_eta(1.5).validate().is_err());
    }

    proptest! {
        #[test]
        fn rank_monotone_in_threshold_and_scale(
            mut values in proptest::collection::vec(-5.0f64..50.0, 1..12),
            c1 in 1e-3f64..10.0, c2 in 1e-3f64..10.0,
            s1 in 1e-3f64..10.0, s2 in 1e-3f64..10.0,
            k in 1usize..100_000,
        ) {
            values.sort_by(|a, b| b.total_cmp(a));
            let (clo, chi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
            let (slo, shi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
            let cfg = |c, s| ScalingConfig { c_tilde: c, eta: ETA_DEFAULT, scale: Scale::Value(s) };
            let r = |c, s| rank_from_values(&values, k, &cfg(c, s), None).unwrap().r_hat;
            prop_assert!(r(chi, slo) <= r(clo, slo));
            prop_assert!(r(clo, shi) <= r(clo, slo));
        }

        #[test]
        fn r_hat_is_threshold_count(
            mut values in proptest::collection::vec(-5.0f64..50.0, 1..12),
            k in 1usize..100_000,
        ) {
            values.sort_by(|a, b| b.total_cmp(a));
            let est = rank_from_values(&values, k, &ScalingConfig::default(), None).unwrap();
            let count = est.scaled_eigenvalues.iter().filter(|&&s| s > est.threshold).count();
            prop_assert_eq!(est.r_hat, count);
            for w in est.scaled_eigenvalues.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
        }
    }
}
