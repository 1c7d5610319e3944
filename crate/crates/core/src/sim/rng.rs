//! Seeded random streams and the handful of distributions the scenarios use.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Binomial, ChiSquared, Distribution, Gamma, Normal, Poisson, Uniform};

use crate::error::{Error, Result};

/// Generator used for every replication.
pub type SimRng = ChaCha12Rng;

/// Description of the stream derivation, recorded in simulation output.
pub const RNG_ALGORITHM: &str = "ChaCha12 (rand_chacha 0.9): seed_from_u64(seed), stream = rep_index";

/// Independent stream for replication `rep` of a run seeded with `seed`.
///
/// ChaCha streams with distinct stream ids never overlap, so replications are
/// independent without any seed hashing.
pub fn rep_rng(seed: u64, rep: u64) -> SimRng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// A univariate distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dist {
    Normal { mu: f64, sigma: f64 },
    Uniform { a: f64, b: f64 },
    Poisson { lambda: f64 },
    Binomial { s: u64, p: f64 },
    /// Failures before the `s`-th success with success probability `1 - p`,
    /// so the mean is `s p / (1 - p)`. Sampled as a Gamma-Poisson mixture.
    NegBin { s: f64, p: f64 },
    Gamma { shape: f64, rate: f64 },
    /// Noncentral chi-square: `J ~ Poisson(lambda / 2)` then a central
    /// chi-square with `nu + 2J` degrees of freedom.
    NoncentralChiSq { nu: f64, lambda: f64 },
}

impl Dist {
    /// NegBin with size `s` and mean `theta`.
    pub fn negbin_mean(s: f64, theta: f64) -> Dist {
        Dist::NegBin {
            s,
            p: theta / (s + theta),
        }
    }

    /// Gamma with shape `s` and mean `theta`.
    pub fn gamma_mean(s: f64, theta: f64) -> Dist {
        Dist::Gamma {
            shape: s,
            rate: s / theta,
        }
    }
}

fn invalid(what: String) -> Error {
    Error::InvalidParameter(what)
}

fn poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> Result<f64> {
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let d = Poisson::new(lambda).map_err(|e| invalid(format!("poisson({lambda}): {e}")))?;
    Ok(d.sample(rng))
}

fn gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    let d = Gamma::new(shape, scale)
        .map_err(|e| invalid(format!("gamma(shape={shape}, scale={scale}): {e}")))?;
    Ok(d.sample(rng))
}

/// One draw from `dist`.
pub fn sample<R: Rng + ?Sized>(dist: &Dist, rng: &mut R) -> Result<f64> {
    match *dist {
        Dist::Normal { mu, sigma } => {
            if !(sigma >= 0.0) {
                return Err(invalid(format!("normal({mu}, {sigma}): negative sigma")));
            }
            let d = Normal::new(mu, sigma)
                .map_err(|e| invalid(format!("normal({mu}, {sigma}): {e}")))?;
            Ok(d.sample(rng))
        }
        Dist::Uniform { a, b } => {
            if a == b && a.is_finite() {
                return Ok(a);
            }
            let d = Uniform::new(a, b).map_err(|e| invalid(format!("uniform({a}, {b}): {e}")))?;
            Ok(d.sample(rng))
        }
        Dist::Poisson { lambda } => {
            if !(lambda >= 0.0) {
                return Err(invalid(format!("poisson({lambda}): negative rate")));
            }
            poisson(lambda, rng)
        }
        Dist::Binomial { s, p } => {
            let d = Binomial::new(s, p).map_err(|e| invalid(format!("binomial({s}, {p}): {e}")))?;
            Ok(d.sample(rng) as f64)
        }
        Dist::NegBin { s, p } => {
            if !(s > 0.0 && s.is_finite() && (0.0..1.0).contains(&p)) {
                return Err(invalid(format!("negbin({s}, {p})")));
            }
            if p == 0.0 {
                return Ok(0.0);
            }
            let lambda = gamma(s, p / (1.0 - p), rng)?;
            poisson(lambda, rng)
        }
        Dist::Gamma { shape, rate } => {
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(invalid(format!("gamma rate {rate}")));
            }
            gamma(shape, 1.0 / rate, rng)
        }
        Dist::NoncentralChiSq { nu, lambda } => {
            if !(nu > 0.0 && nu.is_finite() && lambda >= 0.0) {
                return Err(invalid(format!("noncentral chi-square({nu}, {lambda})")));
            }
            let j = poisson(lambda / 2.0, rng)?;
            let d = ChiSquared::new(nu + 2.0 * j)
                .map_err(|e| invalid(format!("chi-square({}): {e}", nu + 2.0 * j)))?;
            Ok(d.sample(rng))
        }
    }
}
