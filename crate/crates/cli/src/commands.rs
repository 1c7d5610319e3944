use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use latentspec::latent::{estimate_rank_with_grid, RankDecision};
use latentspec::sim::{rep_rng, run_replications, ReplicationStats, RNG_ALGORITHM};
use latentspec::{
    adjusted_gram, estimate_dk_leek, estimate_dk_qvf, estimate_rank, subspace_distance,
    subspace_with_decision, sym_eigen, DataMatrix, Matrix, RankMode, RowSpaceBasis,
    SubspaceEstimate, SymmetricEigen, VarianceEstimate,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::SimConfig;
use crate::io::{fmt_f64, read_matrix, write_json, write_matrix, write_table};
use crate::{parse_list, parse_range, CliError, RankArgs, VarianceArgs, VarianceSource};

const EIGEN_TOL: f64 = latentspec::matrix::EIGEN_TOL;

#[derive(Args, Debug)]
pub struct DataArgs {
    /// CSV data matrix, rows = variables, columns = samples.
    #[arg(long)]
    pub data: PathBuf,
    /// The file stores samples as rows.
    #[arg(long)]
    pub transpose: bool,
}

impl DataArgs {
    fn load(&self) -> Result<DataMatrix, CliError> {
        let m = read_matrix(&self.data)?;
        let m = if self.transpose { m.transpose() } else { m };
        let y = DataMatrix::try_from(m)
            .map_err(|e| CliError::parse(format!("{}: {e}", self.data.display())))?;
        if y.k() <= y.n() {
            eprintln!(
                "warning: {} variables for {} samples; the estimator expects k much larger than n",
                y.k(),
                y.n()
            );
        }
        Ok(y)
    }
}

fn variance(y: &DataMatrix, src: &VarianceSource) -> Result<VarianceEstimate, CliError> {
    let d = match src {
        VarianceSource::Family(f) => estimate_dk_qvf(y, f)?,
        VarianceSource::Leek(t) => estimate_dk_leek(y, *t)?,
        VarianceSource::Explicit(v) => {
            if v.len() != y.n() {
                return Err(CliError::parse(format!(
                    "--dk-file has {} entries, data has {} columns",
                    v.len(),
                    y.n()
                )));
            }
            VarianceEstimate::explicit(v.clone())?
        }
    };
    if d.negative_entries {
        eprintln!("warning: the variance correction has negative entries");
    }
    Ok(d)
}

fn decompose(y: &DataMatrix, d: &VarianceEstimate) -> Result<SymmetricEigen, CliError> {
    Ok(sym_eigen(&adjusted_gram(y, d)?, EIGEN_TOL)?)
}

fn select(
    eig: &SymmetricEigen,
    k: usize,
    mode: &RankMode,
    grid: Option<&[f64]>,
) -> Result<SubspaceEstimate, CliError> {
    let n = eig.dim();
    let decision = match *mode {
        RankMode::Fixed(r) => {
            if r == 0 || r > n {
                return Err(CliError::parse(format!(
                    "fixed rank must satisfy 1 <= r <= n = {n}, got {r}"
                )));
            }
            RankDecision::Fixed { r }
        }
        RankMode::Auto(cfg) => RankDecision::Estimated(match grid {
            Some(g) => estimate_rank_with_grid(eig, k, &cfg, g)?,
            None => estimate_rank(eig, k, &cfg)?,
        }),
    };
    Ok(subspace_with_decision(eig, decision))
}

fn load_reference(path: &Path, normalize: bool) -> Result<RowSpaceBasis, CliError> {
    let m = RowSpaceBasis::new(read_matrix(path)?)?;
    Ok(if normalize { m.normalized_rows()? } else { m })
}

fn out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))
}

// ---------------------------------------------------------------- estimate

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub variance: VarianceArgs,
    #[command(flatten)]
    pub rank: RankArgs,
    /// Output directory for m_hat.csv, eigenvalues.csv and rank.json.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct RankRecord<'a> {
    r_hat: usize,
    k: usize,
    n: usize,
    variance: &'a VarianceEstimate,
    decision: &'a RankDecision,
}

pub fn estimate(a: &EstimateArgs) -> Result<(), CliError> {
    let src = a.variance.source()?;
    let mode = a.rank.mode()?;
    let grid = a.rank.grid()?;
    let y = a.data.load()?;
    let d = variance(&y, &src)?;
    let eig = decompose(&y, &d)?;
    let est = select(&eig, y.k(), &mode, grid.as_deref())?;

    out_dir(&a.out)?;
    write_matrix(&a.out.join("m_hat.csv"), &est.m_hat)?;
    write_matrix(
        &a.out.join("eigenvalues.csv"),
        &Matrix::new(eig.dim(), 1, eig.values.clone()).expect("column vector"),
    )?;
    write_json(
        &a.out.join("rank.json"),
        &RankRecord {
            r_hat: est.r_hat(),
            k: y.k(),
            n: y.n(),
            variance: &d,
            decision: &est.rank,
        },
    )?;
    if est.is_empty() {
        return Err(CliError::empty(
            "no eigenvalue exceeds the threshold; the estimated subspace is empty \
             (see rank.json for the scaled eigenvalues and calibration trace)",
        ));
    }
    println!("r_hat = {}", est.r_hat());
    Ok(())
}

// ---------------------------------------------------------------- simulate

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// JSON batch configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run the full published grid (every scenario, n up to 200, k up to 1e5, 100 reps).
    #[arg(long)]
    pub full: bool,
    /// Output directory (overrides output_dir in the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct SimMetadata<'a> {
    rng: &'a str,
    config: &'a SimConfig,
    full: bool,
    failures: Vec<FailureRecord>,
}

#[derive(Serialize)]
struct FailureRecord {
    scenario: String,
    n: usize,
    k: usize,
    r: usize,
    rep: usize,
    error: String,
}

const SUMMARY_HEADER: [&str; 11] = [
    "scenario",
    "n",
    "k",
    "r",
    "reps",
    "r_correct",
    "r_under",
    "r_over",
    "d_median_fixed",
    "d_median_auto",
    "rho_median",
];

const REPS_HEADER: [&str; 11] = [
    "scenario",
    "n",
    "k",
    "r",
    "rep",
    "r_hat",
    "d_fixed",
    "d_auto",
    "rho",
    "scale_coefficient",
    "no_plateau",
];

pub fn summary_row(s: &ReplicationStats) -> Vec<String> {
    vec![
        s.scenario.to_string(),
        s.n.to_string(),
        s.k.to_string(),
        s.r.to_string(),
        s.reps.to_string(),
        s.r_correct.to_string(),
        s.r_under.to_string(),
        s.r_over.to_string(),
        fmt_f64(s.d_median_fixed),
        fmt_f64(s.d_median_auto),
        fmt_f64(s.rho_median),
    ]
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let cfg = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::parse(format!("{}: {e}", p.display())))?;
            SimConfig::parse(&text)?
        }
        None if a.full => SimConfig::default(),
        None => return Err(CliError::parse("simulate needs --config or --full")),
    };
    let cells = cfg.cells(a.full)?;
    let dir = a
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    out_dir(&dir)?;

    let mut summary = Vec::with_capacity(cells.len());
    let mut reps = Vec::new();
    let mut failures = Vec::new();
    for cell in &cells {
        let s = run_replications(cell)?;
        eprintln!(
            "{} n={} k={} r={}: r_hat = r in {}/{}",
            s.scenario, s.n, s.k, s.r, s.r_correct, s.reps
        );
        summary.push(summary_row(&s));
        for rec in &s.records {
            reps.push(vec![
                s.scenario.to_string(),
                s.n.to_string(),
                s.k.to_string(),
                s.r.to_string(),
                rec.rep.to_string(),
                rec.r_hat.to_string(),
                fmt_f64(rec.d_fixed),
                rec.d_auto.map(fmt_f64).unwrap_or_default(),
                fmt_f64(rec.rho),
                fmt_f64(rec.scale_coefficient),
                rec.no_plateau.to_string(),
            ]);
        }
        for f in s.failures {
            failures.push(FailureRecord {
                scenario: s.scenario.to_string(),
                n: s.n,
                k: s.k,
                r: s.r,
                rep: f.rep,
                error: f.error,
            });
        }
    }
    write_table(&dir.join("summary.csv"), &SUMMARY_HEADER, &summary)?;
    write_table(&dir.join("reps.csv"), &REPS_HEADER, &reps)?;
    write_json(
        &dir.join("metadata.json"),
        &SimMetadata {
            rng: RNG_ALGORITHM,
            config: &cfg,
            full: a.full,
            failures,
        },
    )?;
    Ok(())
}

// ---------------------------------------------------------------- distance

#[derive(Args, Debug)]
pub struct DistanceArgs {
    /// Reference basis M (r x n CSV).
    #[arg(long)]
    pub m: PathBuf,
    /// Estimated basis with orthonormal rows (r_hat x n CSV).
    #[arg(long)]
    pub m_hat: PathBuf,
    /// Scale each row of M to unit Euclidean norm first.
    #[arg(long)]
    pub normalize_m: bool,
    /// Also write the result as JSON.
    #[arg(long, value_name = "PATH")]
    pub json: Option<PathBuf>,
}

#[derive(Serialize)]
struct DistanceRecord {
    d: f64,
    r: usize,
    r_hat: usize,
    n: usize,
    normalized_m: bool,
    m_hat_orthonormal: bool,
}

pub fn distance(a: &DistanceArgs) -> Result<(), CliError> {
    let m = load_reference(&a.m, a.normalize_m)?;
    let mh = RowSpaceBasis::new(read_matrix(&a.m_hat)?)?;
    if m.dim() != mh.dim() {
        return Err(CliError::parse(format!(
            "column counts differ: M has {}, M_hat has {}",
            m.dim(),
            mh.dim()
        )));
    }
    let dist = subspace_distance(&m, &mh)?;
    if !dist.m_hat_orthonormal {
        eprintln!("warning: rows of M_hat are not orthonormal; d is computed anyway");
    }
    println!("{}", dist.d);
    if let Some(p) = &a.json {
        write_json(
            p,
            &DistanceRecord {
                d: dist.d,
                r: m.rank(),
                r_hat: mh.rank(),
                n: m.dim(),
                normalized_m: a.normalize_m,
                m_hat_orthonormal: dist.m_hat_orthonormal,
            },
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------- subsample

#[derive(Args, Debug)]
pub struct SubsampleArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Reference basis M (r x n CSV).
    #[arg(long)]
    pub m: PathBuf,
    #[arg(long)]
    pub normalize_m: bool,
    #[command(flatten)]
    pub variance: VarianceArgs,
    /// Rank selection; defaults to fixed at the number of rows of M.
    #[arg(long)]
    pub rank: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    pub c_tilde: f64,
    #[arg(long, default_value = "1/3")]
    pub eta: String,
    #[arg(long, default_value = "auto")]
    pub scale: String,
    /// Comma-separated row counts.
    #[arg(long, value_name = "LIST")]
    pub k_grid: String,
    #[arg(long, default_value_t = 50)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for curve.csv.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

pub fn subsample(a: &SubsampleArgs) -> Result<(), CliError> {
    let src = a.variance.source()?;
    let y = a.data.load()?;
    let m = load_reference(&a.m, a.normalize_m)?;
    if m.dim() != y.n() {
        return Err(CliError::parse(format!(
            "M has {} columns, data has {} samples",
            m.dim(),
            y.n()
        )));
    }
    let rank = RankArgs {
        rank: a.rank.clone().unwrap_or_else(|| format!("fixed:{}", m.rank())),
        c_tilde: a.c_tilde,
        eta: a.eta.clone(),
        scale: a.scale.clone(),
        grid: None,
    };
    let mode = rank.mode()?;
    let grid: Vec<usize> = parse_list(&a.k_grid)?;
    if grid.is_empty() || a.reps == 0 {
        return Err(CliError::parse("--k-grid and --reps must be non-empty"));
    }
    if let Some(&bad) = grid.iter().find(|&&k| k == 0 || k > y.k()) {
        return Err(CliError::parse(format!(
            "k = {bad} is outside 1..={} (rows available)",
            y.k()
        )));
    }

    let mut rows = Vec::with_capacity(grid.len());
    for (gi, &k) in grid.iter().enumerate() {
        let ds: Vec<Result<Option<f64>, CliError>> = (0..a.reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = rep_rng(a.seed, ((gi as u64) << 32) | rep as u64);
                let mut idx = rand::seq::index::sample(&mut rng, y.k(), k).into_vec();
                idx.sort_unstable();
                let sub = y.select_rows(&idx)?;
                let d = variance(&sub, &src)?;
                let est = select(&decompose(&sub, &d)?, k, &mode, None)?;
                if est.is_empty() {
                    return Ok(None);
                }
                let mh = RowSpaceBasis::new(est.m_hat)?;
                Ok(Some(subspace_distance(&m, &mh)?.d))
            })
            .collect();
        let mut vals = Vec::with_capacity(a.reps);
        for d in ds {
            if let Some(v) = d? {
                vals.push(v);
            }
        }
        let med = latentspec::sim::median(&vals);
        rows.push(vec![k.to_string(), a.reps.to_string(), vals.len().to_string(), fmt_f64(med)]);
        println!("k = {k}: median d = {med}");
    }
    out_dir(&a.out)?;
    write_table(&a.out.join("curve.csv"), &["k", "reps", "n_valid", "median_d"], &rows)
}

// ---------------------------------------------------------------- rank-sweep

#[derive(Args, Debug)]
pub struct RankSweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub variance: VarianceArgs,
    /// Forced ranks: `a..b` or a comma-separated list.
    #[arg(long, value_name = "RANGE")]
    pub r_grid: String,
    /// Reference basis M to measure the distance against.
    #[arg(long)]
    pub m: Option<PathBuf>,
    #[arg(long)]
    pub normalize_m: bool,
    /// Output directory for sweep.csv.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

pub fn rank_sweep(a: &RankSweepArgs) -> Result<(), CliError> {
    let src = a.variance.source()?;
    let ranks = parse_range(&a.r_grid)?;
    let y = a.data.load()?;
    let n = y.n();
    if ranks.is_empty() || ranks.iter().any(|&r| r == 0 || r > n) {
        return Err(CliError::parse(format!("--r-grid must lie within 1..={n}")));
    }
    let m = a
        .m
        .as_ref()
        .map(|p| load_reference(p, a.normalize_m))
        .transpose()?;
    if let Some(m) = &m {
        if m.dim() != n {
            return Err(CliError::parse(format!(
                "M has {} columns, data has {n} samples",
                m.dim()
            )));
        }
    }
    let d = variance(&y, &src)?;
    let eig = decompose(&y, &d)?;

    let mut rows = Vec::with_capacity(ranks.len());
    for &r in &ranks {
        let est = select(&eig, y.k(), &RankMode::Fixed(r), None)?;
        let dist = match &m {
            Some(m) => Some(subspace_distance(m, &RowSpaceBasis::new(est.m_hat)?)?.d),
            None => None,
        };
        println!("{r}\t{}", dist.map(|x| x.to_string()).unwrap_or_else(|| "-".into()));
        rows.push(vec![
            r.to_string(),
            fmt_f64(eig.values[r - 1]),
            dist.map(fmt_f64).unwrap_or_default(),
        ]);
    }
    out_dir(&a.out)?;
    write_table(&a.out.join("sweep.csv"), &["r_forced", "eigenvalue", "d"], &rows)
}
