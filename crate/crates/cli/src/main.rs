//! `latentspec`: estimate latent row spaces from data files and run the
//! simulation batches.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 bad input or
//! configuration, 3 data outside the family support or a rank-deficient
//! basis, 4 empty estimated subspace.

mod commands;
mod config;
mod io;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use latentspec::{Error, Family, FamilyKind, RankMode, Scale, ScalingConfig};

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub msg: String,
}

impl CliError {
    pub fn parse(msg: impl Into<String>) -> Self {
        CliError { code: 2, msg: msg.into() }
    }

    pub fn io(msg: impl Into<String>) -> Self {
        CliError { code: 1, msg: msg.into() }
    }

    pub fn empty(msg: impl Into<String>) -> Self {
        CliError { code: 4, msg: msg.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::SupportViolation { .. } | Error::OutOfSupport { .. } | Error::RankDeficient { .. } => 3,
            Error::NoConvergence { .. } | Error::NotSymmetric { .. } => 1,
            _ => 2,
        };
        CliError { code, msg: e.to_string() }
    }
}

#[derive(Parser, Debug)]
#[command(name = "latentspec", version, about = "Latent row-space estimation from second moments")]
struct Cli {
    /// Worker threads (default: available parallelism). LATENTSPEC_THREADS takes precedence.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate the latent row space of a k x n data matrix.
    Estimate(commands::EstimateArgs),
    /// Run simulation replications from a JSON config.
    Simulate(commands::SimulateArgs),
    /// Distance between the row spaces of two matrices.
    Distance(commands::DistanceArgs),
    /// Median distance to a reference M over random row subsets.
    Subsample(commands::SubsampleArgs),
    /// Distance to a reference M for a range of forced ranks.
    RankSweep(commands::RankSweepArgs),
}

/// Variance correction source. Exactly one is required.
#[derive(Args, Debug, Clone)]
pub struct VarianceArgs {
    /// Family of the observations: normal, poisson, binomial, negbin, gamma, ghs.
    #[arg(long)]
    pub family: Option<FamilyKind>,
    /// Auxiliary parameter of the family (binomial trials, negbin size, gamma or ghs shape).
    #[arg(long)]
    pub s: Option<f64>,
    /// Normal data with unknown row variances; drop the top t-1 singular directions.
    #[arg(long, value_name = "T")]
    pub leek: Option<usize>,
    /// CSV with the n diagonal entries of D.
    #[arg(long, value_name = "PATH")]
    pub dk_file: Option<PathBuf>,
}

pub enum VarianceSource {
    Family(Family),
    Leek(usize),
    Explicit(Vec<f64>),
}

impl VarianceArgs {
    pub fn source(&self) -> Result<VarianceSource, CliError> {
        let given = [self.family.is_some(), self.leek.is_some(), self.dk_file.is_some()];
        if given.iter().filter(|&&g| g).count() != 1 {
            return Err(CliError::parse(
                "exactly one of --family, --leek or --dk-file is required",
            ));
        }
        if let Some(kind) = self.family {
            return Ok(VarianceSource::Family(Family::new(kind, self.s)?));
        }
        if self.s.is_some() {
            return Err(CliError::parse("--s only applies together with --family"));
        }
        if let Some(t) = self.leek {
            return Ok(VarianceSource::Leek(t));
        }
        let path = self.dk_file.as_ref().expect("checked above");
        Ok(VarianceSource::Explicit(io::read_vector(path)?))
    }
}

/// Rank selection and scaling.
#[derive(Args, Debug, Clone)]
pub struct RankArgs {
    /// `auto` or `fixed:R`.
    #[arg(long, default_value = "auto")]
    pub rank: String,
    /// Threshold on the scaled eigenvalues.
    #[arg(long, default_value_t = 1.0)]
    pub c_tilde: f64,
    /// Exponent of k in the scaling; accepts fractions such as 1/1.1.
    #[arg(long, default_value = "1/3")]
    pub eta: String,
    /// Scale coefficient: `auto` (calibrated) or a positive number.
    #[arg(long, default_value = "auto")]
    pub scale: String,
    /// Comma-separated calibration grid of scale coefficients (ascending).
    #[arg(long, value_name = "LIST")]
    pub grid: Option<String>,
}

pub fn parse_number(s: &str) -> Result<f64, CliError> {
    let s = s.trim();
    let bad = || CliError::parse(format!("not a number: '{s}'"));
    match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            Ok(a / b)
        }
        None => s.parse().map_err(|_| bad()),
    }
}

pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, CliError> {
    s.split(',')
        .filter(|x| !x.trim().is_empty())
        .map(|x| {
            x.trim()
                .parse::<T>()
                .map_err(|_| CliError::parse(format!("bad list entry '{x}'")))
        })
        .collect()
}

/// `a..b` (inclusive) or a comma-separated list.
pub fn parse_range(s: &str) -> Result<Vec<usize>, CliError> {
    if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| CliError::parse(format!("bad range '{s}'")))?;
        let b: usize = b
            .trim()
            .trim_start_matches('=')
            .parse()
            .map_err(|_| CliError::parse(format!("bad range '{s}'")))?;
        if a > b {
            return Err(CliError::parse(format!("empty range '{s}'")));
        }
        return Ok((a..=b).collect());
    }
    parse_list(s)
}

impl RankArgs {
    pub fn scaling(&self) -> Result<ScalingConfig, CliError> {
        let scale = if self.scale.eq_ignore_ascii_case("auto") {
            Scale::Auto
        } else {
            Scale::Value(parse_number(&self.scale)?)
        };
        let cfg = ScalingConfig {
            c_tilde: self.c_tilde,
            eta: parse_number(&self.eta)?,
            scale,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn grid(&self) -> Result<Option<Vec<f64>>, CliError> {
        self.grid
            .as_deref()
            .map(|g| g.split(',').map(parse_number).collect())
            .transpose()
    }

    pub fn mode(&self) -> Result<RankMode, CliError> {
        let r = self.rank.trim();
        if r.eq_ignore_ascii_case("auto") {
            return Ok(RankMode::Auto(self.scaling()?));
        }
        match r.split_once(':') {
            Some(("fixed", v)) => v
                .trim()
                .parse()
                .map(RankMode::Fixed)
                .map_err(|_| CliError::parse(format!("bad fixed rank '{v}'"))),
            _ => Err(CliError::parse(format!(
                "--rank must be 'auto' or 'fixed:R', got '{r}'"
            ))),
        }
    }
}

fn init_threads(flag: Option<usize>) -> Result<(), CliError> {
    let env = std::env::var("LATENTSPEC_THREADS").ok();
    let threads = match env.as_deref().map(str::trim) {
        Some(v) if !v.is_empty() => Some(
            v.parse::<usize>()
                .map_err(|_| CliError::parse(format!("LATENTSPEC_THREADS: bad value '{v}'")))?,
        ),
        _ => flag,
    };
    if let Some(t) = threads.filter(|&t| t > 0) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::io(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads(cli.threads)?;
    match cli.command {
        Command::Estimate(a) => commands::estimate(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Distance(a) => commands::distance(&a),
        Command::Subsample(a) => commands::subsample(&a),
        Command::RankSweep(a) => commands::rank_sweep(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
