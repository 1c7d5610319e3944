//! Replication harness: rank accuracy, subspace distance and variance error.

use rayon::prelude::*;
use serde::Serialize;

use super::scenario::{generate_scenario, Scenario, ScenarioConfig, ScenarioDraw};
use crate::error::Result;
use crate::latent::{adjusted_gram, subspace_from_eigen, RankDecision, RankMode};
use crate::matrix::{sym_eigen, EIGEN_TOL};
use crate::metrics::{subspace_distance, RowSpaceBasis};
use crate::variance::{dk_error, estimate_dk_qvf, VarianceEstimate};

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepRecord {
    pub rep: usize,
    pub r_hat: usize,
    /// `d(M, M_hat)` at the fixed rank.
    pub d_fixed: f64,
    /// `d(M, M_hat)` at the estimated rank; `None` when `r_hat = 0`.
    pub d_auto: Option<f64>,
    pub rho: f64,
    pub scale_coefficient: f64,
    pub no_plateau: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepFailure {
    pub rep: usize,
    pub error: String,
}

/// Aggregates over the successful replications of one cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationStats {
    pub scenario: Scenario,
    pub n: usize,
    pub k: usize,
    pub r: usize,
    pub eta: f64,
    pub reps: usize,
    pub r_correct: usize,
    pub r_under: usize,
    pub r_over: usize,
    pub d_median_fixed: f64,
    /// Over replications with `r_hat >= 1`; NaN if there are none.
    pub d_median_auto: f64,
    pub rho_median: f64,
    pub records: Vec<RepRecord>,
    pub failures: Vec<RepFailure>,
}

/// Sample quantile with linear interpolation between order statistics.
/// NaN for an empty slice.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Variance correction used by the harness: `D = I` for the Normal scenario,
/// the QVF estimator otherwise.
pub fn harness_dk(draw: &ScenarioDraw) -> Result<VarianceEstimate> {
    match draw.scenario {
        Scenario::NormalA => Ok(VarianceEstimate::known_unit(draw.y.n())),
        sc => estimate_dk_qvf(&draw.y, &sc.family()),
    }
}

/// Runs one replication.
pub fn run_one(cfg: &ScenarioConfig, rep: usize) -> Result<RepRecord> {
    let draw = generate_scenario(cfg, rep)?;
    let d = harness_dk(&draw)?;
    let rho = dk_error(&d, &draw.true_deltas)?;
    let eig = sym_eigen(&adjusted_gram(&draw.y, &d)?, EIGEN_TOL)?;

    let m = RowSpaceBasis::new(draw.m.clone())?;
    let fixed = subspace_from_eigen(&eig, cfg.k, &RankMode::Fixed(cfg.fixed_rank()))?;
    let d_fixed = subspace_distance(&m, &RowSpaceBasis::new(fixed.m_hat)?)?.d;

    let auto = subspace_from_eigen(&eig, cfg.k, &RankMode::Auto(cfg.scaling))?;
    let (scale_coefficient, no_plateau) = match &auto.rank {
        RankDecision::Estimated(e) => (
            e.scale_coefficient,
            e.calibration.as_ref().is_some_and(|c| c.no_plateau),
        ),
        RankDecision::Fixed { .. } => unreachable!("automatic rank requested"),
    };
    let r_hat = auto.r_hat();
    let d_auto = if auto.is_empty() {
        None
    } else {
        Some(subspace_distance(&m, &RowSpaceBasis::new(auto.m_hat)?)?.d)
    };

    Ok(RepRecord {
        rep,
        r_hat,
        d_fixed,
        d_auto,
        rho,
        scale_coefficient,
        no_plateau,
    })
}

/// Runs every replication of `cfg` (in parallel) and aggregates.
///
/// Replications that fail are recorded and excluded from the aggregates.
/// Results do not depend on the thread count.
pub fn run_replications(cfg: &ScenarioConfig) -> Result<ReplicationStats> {
    cfg.validate()?;
    let outcomes: Vec<Result<RepRecord>> =
        (0..cfg.reps).into_par_iter().map(|rep| run_one(cfg, rep)).collect();

    let mut records = Vec::with_capacity(cfg.reps);
    let mut failures = Vec::new();
    for (rep, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(rec) => records.push(rec),
            Err(e) => failures.push(RepFailure {
                rep,
                error: e.to_string(),
            }),
        }
    }

    let r = cfg.r;
    let d_fixed: Vec<f64> = records.iter().map(|x| x.d_fixed).collect();
    let d_auto: Vec<f64> = records.iter().filter_map(|x| x.d_auto).collect();
    let rho: Vec<f64> = records.iter().map(|x| x.rho).collect();
    Ok(ReplicationStats {
        scenario: cfg.scenario,
        n: cfg.n,
        k: cfg.k,
        r,
        eta: cfg.scaling.eta,
        reps: cfg.reps,
        r_correct: records.iter().filter(|x| x.r_hat == r).count(),
        r_under: records.iter().filter(|x| x.r_hat < r).count(),
        r_over: records.iter().filter(|x| x.r_hat > r).count(),
        d_median_fixed: median(&d_fixed),
        d_median_auto: median(&d_auto),
        rho_median: median(&rho),
        records,
        failures,
    })
}
