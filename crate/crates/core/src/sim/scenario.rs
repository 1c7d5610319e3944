//! The five simulation scenarios and their draws.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::rng::{rep_rng, sample, Dist};
use crate::error::{Error, Result};
use crate::latent::ScalingConfig;
use crate::matrix::{DataMatrix, Matrix};
use crate::nef::{Family, FamilyKind};

/// Binomial trial count of the binomial scenario.
pub const BINOMIAL_S: u32 = 20;
/// Size of the negative binomial scenario.
pub const NEGBIN_S: f64 = 10.0;
/// Shape of the gamma scenario.
pub const GAMMA_S: f64 = 10.0;

/// Simulation scenarios.
///
/// | scenario | `y given theta` | `phi` | `m` |
/// |---|---|---|---|
/// | normal | Normal(theta, 1) | N(0, 1) | U(1, 10) |
/// | poisson | Poisson(theta) | noncentral chi-square(9, 1) | U(1, 5) |
/// | binomial | Binomial(20, theta), theta a probability | U(0.05, 0.95) | fixed |
/// | negbin | NegBin(10) with mean theta | U(0.5, 2) | U(0.3, 1.5) |
/// | gamma | Gamma(shape 10) with mean theta | U(0.5, 2) | U(0.3, 1.5) |
///
/// The fixed binomial `M` has `e_i` in column `i <= r` and `1/r` everywhere
/// in columns `r+1..n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    NormalA,
    PoissonB,
    BinomialC,
    NegBinD,
    GammaE,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::NormalA,
        Scenario::PoissonB,
        Scenario::BinomialC,
        Scenario::NegBinD,
        Scenario::GammaE,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::NormalA => "normal",
            Scenario::PoissonB => "poisson",
            Scenario::BinomialC => "binomial",
            Scenario::NegBinD => "negbin",
            Scenario::GammaE => "gamma",
        }
    }

    pub fn letter(self) -> char {
        match self {
            Scenario::NormalA => 'a',
            Scenario::PoissonB => 'b',
            Scenario::BinomialC => 'c',
            Scenario::NegBinD => 'd',
            Scenario::GammaE => 'e',
        }
    }

    pub fn family(self) -> Family {
        match self {
            Scenario::NormalA => Ok(Family::normal()),
            Scenario::PoissonB => Ok(Family::poisson()),
            Scenario::BinomialC => Family::new(FamilyKind::Binomial, Some(BINOMIAL_S as f64)),
            Scenario::NegBinD => Family::new(FamilyKind::NegBin, Some(NEGBIN_S)),
            Scenario::GammaE => Family::new(FamilyKind::Gamma, Some(GAMMA_S)),
        }
        .expect("scenario family parameters are valid")
    }

    /// Factor turning `theta` into the family mean (the binomial scenario
    /// stores success probabilities).
    pub fn mean_scale(self) -> f64 {
        match self {
            Scenario::BinomialC => BINOMIAL_S as f64,
            _ => 1.0,
        }
    }

    fn phi_dist(self) -> Dist {
        match self {
            Scenario::NormalA => Dist::Normal { mu: 0.0, sigma: 1.0 },
            Scenario::PoissonB => Dist::NoncentralChiSq { nu: 9.0, lambda: 1.0 },
            Scenario::BinomialC => Dist::Uniform { a: 0.05, b: 0.95 },
            Scenario::NegBinD | Scenario::GammaE => Dist::Uniform { a: 0.5, b: 2.0 },
        }
    }

    fn m_dist(self) -> Option<Dist> {
        match self {
            Scenario::NormalA => Some(Dist::Uniform { a: 1.0, b: 10.0 }),
            Scenario::PoissonB => Some(Dist::Uniform { a: 1.0, b: 5.0 }),
            Scenario::BinomialC => None,
            Scenario::NegBinD | Scenario::GammaE => Some(Dist::Uniform { a: 0.3, b: 1.5 }),
        }
    }

    fn y_dist(self, theta: f64) -> Dist {
        match self {
            Scenario::NormalA => Dist::Normal {
                mu: theta,
                sigma: 1.0,
            },
            Scenario::PoissonB => Dist::Poisson { lambda: theta },
            Scenario::BinomialC => Dist::Binomial {
                s: BINOMIAL_S as u64,
                p: theta,
            },
            Scenario::NegBinD => Dist::negbin_mean(NEGBIN_S, theta),
            Scenario::GammaE => Dist::gamma_mean(GAMMA_S, theta),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    /// Accepts the name (`"poisson"`), the letter (`"b"`) or both (`"b_poisson"`).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Scenario::ALL
            .into_iter()
            .find(|sc| {
                s == sc.name()
                    || s == sc.letter().to_string()
                    || s == format!("{}_{}", sc.letter(), sc.name())
                    || s == format!("({})", sc.letter())
            })
            .ok_or_else(|| Error::InvalidParameter(format!("unknown scenario '{s}'")))
    }
}

impl Serialize for Scenario {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Scenario {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Rank used for the fixed-rank column of the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FixedRank {
    /// The true rank `r`.
    #[default]
    True,
    Value(usize),
}

/// One simulation cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub k: usize,
    pub r: usize,
    pub reps: usize,
    pub seed: u64,
    pub scaling: ScalingConfig,
    pub fixed_rank: FixedRank,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario, n: usize, k: usize, r: usize, reps: usize, seed: u64) -> Self {
        ScenarioConfig {
            scenario,
            n,
            k,
            r,
            reps,
            seed,
            scaling: ScalingConfig::default(),
            fixed_rank: FixedRank::True,
        }
    }

    pub fn with_scaling(mut self, scaling: ScalingConfig) -> Self {
        self.scaling = scaling;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParameter(format!("n must be >= 2, got {}", self.n)));
        }
        if self.k < 1 {
            return Err(Error::InvalidParameter("k must be >= 1".into()));
        }
        if self.r < 1 || self.r >= self.n {
            return Err(Error::InvalidParameter(format!(
                "r must satisfy 1 <= r < n = {}, got {}",
                self.n, self.r
            )));
        }
        if self.reps < 1 {
            return Err(Error::InvalidParameter("reps must be >= 1".into()));
        }
        if let FixedRank::Value(f) = self.fixed_rank {
            if f < 1 || f > self.n {
                return Err(Error::InvalidParameter(format!(
                    "fixed rank must satisfy 1 <= r <= n = {}, got {f}",
                    self.n
                )));
            }
        }
        self.scaling.validate()
    }

    pub fn fixed_rank(&self) -> usize {
        match self.fixed_rank {
            FixedRank::True => self.r,
            FixedRank::Value(v) => v,
        }
    }
}

/// One simulated data set together with the quantities it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioDraw {
    pub scenario: Scenario,
    /// `k x r`.
    pub phi: Matrix,
    /// `r x n`.
    pub m: Matrix,
    /// `k x n`, `phi m`. Success probabilities for the binomial scenario.
    pub theta: Matrix,
    pub y: DataMatrix,
    /// Column means of the true variances.
    pub true_deltas: Vec<f64>,
    /// `k^-1 phi^T phi`.
    pub w_exact: Matrix,
}

impl ScenarioDraw {
    /// `y - theta`, on the observation scale.
    pub fn residuals(&self) -> Matrix {
        let scaled = self.theta.scale(self.scenario.mean_scale());
        self.y
            .matrix()
            .sub(&scaled)
            .expect("theta and y share a shape")
    }

    /// `M^T W M` with `W = k^-1 phi^T phi`.
    pub fn h(&self) -> Matrix {
        self.m
            .transpose()
            .matmul(&self.w_exact)
            .and_then(|x| x.matmul(&self.m))
            .expect("conformable by construction")
    }

    /// `theta` as a data matrix, for noiseless checks.
    pub fn noiseless(&self) -> DataMatrix {
        DataMatrix::try_from(self.theta.clone()).expect("theta is finite")
    }
}

/// `e_i` in column `i < r`, `1/r` in every later column.
pub fn binomial_fixed_m(r: usize, n: usize) -> Matrix {
    let mut m = Matrix::zeros(r, n);
    for i in 0..r {
        m.set(i, i, 1.0);
        for j in r..n {
            m.set(i, j, 1.0 / r as f64);
        }
    }
    m
}

fn draw_matrix(rows: usize, cols: usize, dist: &Dist, rng: &mut super::SimRng) -> Result<Matrix> {
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(sample(dist, rng)?);
    }
    Matrix::new(rows, cols, data)
}

/// Draws replication `rep_index` of `cfg`.
///
/// The stream depends only on `(cfg.seed, rep_index)`. Draw order: `phi` row
/// by row, then `M` row by row (except the fixed binomial design), then `Y`
/// row by row.
pub fn generate_scenario(cfg: &ScenarioConfig, rep_index: usize) -> Result<ScenarioDraw> {
    cfg.validate()?;
    let sc = cfg.scenario;
    let (k, n, r) = (cfg.k, cfg.n, cfg.r);
    let family = sc.family();
    let mut rng = rep_rng(cfg.seed, rep_index as u64);

    let phi = draw_matrix(k, r, &sc.phi_dist(), &mut rng)?;
    let m = match sc.m_dist() {
        Some(d) => draw_matrix(r, n, &d, &mut rng)?,
        None => binomial_fixed_m(r, n),
    };
    let theta = phi.matmul(&m)?;

    let mut bad = Vec::new();
    for i in 0..k {
        for (j, &t) in theta.row(i).iter().enumerate() {
            let mean = t * sc.mean_scale();
            let inside = match sc {
                Scenario::NormalA => t.is_finite(),
                Scenario::BinomialC => t > 0.0 && t < 1.0,
                _ => t.is_finite() && t > 0.0,
            };
            if !inside || family.variance(mean).is_err() {
                bad.push((i, j));
            }
        }
    }
    if !bad.is_empty() {
        return Err(Error::SupportViolation {
            family: family.to_string(),
            cells: bad,
        });
    }

    let mut y = Vec::with_capacity(k * n);
    for &t in theta.as_slice() {
        y.push(sample(&sc.y_dist(t), &mut rng)?);
    }
    let y = DataMatrix::new(k, n, y)?;

    let w_exact = phi.transpose().matmul(&phi)?.scale(1.0 / k as f64);
    let mut draw = ScenarioDraw {
        scenario: sc,
        phi,
        m,
        theta,
        y,
        true_deltas: Vec::new(),
        w_exact,
    };
    draw.true_deltas = true_dk(&draw, &family)?;
    Ok(draw)
}

/// Column means of the family variance at each `theta`, converting the
/// binomial scenario's probabilities to means first.
pub fn true_dk(draw: &ScenarioDraw, f: &Family) -> Result<Vec<f64>> {
    let scale = if f.kind() == FamilyKind::Binomial {
        draw.scenario.mean_scale()
    } else {
        1.0
    };
    let (k, n) = draw.theta.shape();
    let mut sums = vec![0.0; n];
    for i in 0..k {
        for (s, &t) in sums.iter_mut().zip(draw.theta.row(i)) {
            *s += f.variance(t * scale)?;
        }
    }
    Ok(sums.into_iter().map(|s| s / k as f64).collect())
}
