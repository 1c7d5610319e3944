//! The six natural exponential families with quadratic variance function.
//!
//! Every family is parameterized by its mean `theta`. For the Binomial that
//! mean is `s * p`; for the negative binomial it is `s p / (1 - p)`; the Gamma
//! has shape `s` and rate `s / theta`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Normal,
    Poisson,
    Binomial,
    NegBin,
    Gamma,
    Ghs,
}

impl FamilyKind {
    pub const ALL: [FamilyKind; 6] = [
        FamilyKind::Normal,
        FamilyKind::Poisson,
        FamilyKind::Binomial,
        FamilyKind::NegBin,
        FamilyKind::Gamma,
        FamilyKind::Ghs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Normal => "normal",
            FamilyKind::Poisson => "poisson",
            FamilyKind::Binomial => "binomial",
            FamilyKind::NegBin => "negbin",
            FamilyKind::Gamma => "gamma",
            FamilyKind::Ghs => "ghs",
        }
    }

    /// Whether the family carries the auxiliary parameter `s`.
    pub fn has_s(self) -> bool {
        !matches!(self, FamilyKind::Normal | FamilyKind::Poisson)
    }
}

impl std::str::FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FamilyKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown family '{s}'")))
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Quadratic variance relation `Var[y] = b0 + b1 E[y] + b2 E[y]^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QvfCoefficients {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
}

impl QvfCoefficients {
    /// `(1 + b2)^-1 (b0 + b1 t + b2 t^2)`, unbiased for the variance.
    pub fn v(&self, t: f64) -> f64 {
        (self.b0 + self.b1 * t + self.b2 * t * t) / (1.0 + self.b2)
    }

    pub fn variance(&self, theta: f64) -> f64 {
        self.b0 + self.b1 * theta + self.b2 * theta * theta
    }
}

/// A family together with its auxiliary parameter.
///
/// Serialized as `{"family": "binomial", "s": 20}`; `s` is omitted for the
/// Normal (unit variance) and Poisson families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FamilySpec", into = "FamilySpec")]
pub struct Family {
    kind: FamilyKind,
    s: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FamilySpec {
    family: FamilyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    s: Option<f64>,
}

impl TryFrom<FamilySpec> for Family {
    type Error = Error;

    fn try_from(spec: FamilySpec) -> Result<Self> {
        Family::new(spec.family, spec.s)
    }
}

impl From<Family> for FamilySpec {
    fn from(f: Family) -> Self {
        FamilySpec {
            family: f.kind,
            s: f.s(),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.s() {
            Some(s) => write!(f, "{}(s={})", self.kind, s),
            None => write!(f, "{}", self.kind),
        }
    }
}

impl Family {
    /// Validating constructor. `s` is required exactly when the kind has one.
    pub fn new(kind: FamilyKind, s: Option<f64>) -> Result<Self> {
        match (kind.has_s(), s) {
            (false, None) => Ok(Family { kind, s: f64::NAN }),
            (false, Some(_)) => Err(Error::InvalidParameter(format!(
                "the {kind} family takes no s parameter"
            ))),
            (true, None) => Err(Error::InvalidParameter(format!(
                "the {kind} family requires an s parameter"
            ))),
            (true, Some(s)) => {
                if !(s.is_finite() && s > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "s must be positive and finite, got {s}"
                    )));
                }
                if kind == FamilyKind::Binomial && (s.fract() != 0.0 || s < 2.0) {
                    return Err(Error::InvalidParameter(format!(
                        "binomial s must be an integer >= 2, got {s}"
                    )));
                }
                Ok(Family { kind, s })
            }
        }
    }

    pub fn normal() -> Self {
        Family {
            kind: FamilyKind::Normal,
            s: f64::NAN,
        }
    }

    pub fn poisson() -> Self {
        Family {
            kind: FamilyKind::Poisson,
            s: f64::NAN,
        }
    }

    pub fn binomial(s: u32) -> Result<Self> {
        Family::new(FamilyKind::Binomial, Some(s as f64))
    }

    pub fn negbin(s: f64) -> Result<Self> {
        Family::new(FamilyKind::NegBin, Some(s))
    }

    pub fn gamma(s: f64) -> Result<Self> {
        Family::new(FamilyKind::Gamma, Some(s))
    }

    pub fn ghs(s: f64) -> Result<Self> {
        Family::new(FamilyKind::Ghs, Some(s))
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn s(&self) -> Option<f64> {
        self.kind.has_s().then_some(self.s)
    }

    /// Whether `y` can be observed under this family.
    pub fn in_support(&self, y: f64) -> bool {
        if !y.is_finite() {
            return false;
        }
        match self.kind {
            FamilyKind::Normal | FamilyKind::Ghs => true,
            FamilyKind::Poisson | FamilyKind::NegBin => y >= 0.0 && y.fract() == 0.0,
            FamilyKind::Binomial => y >= 0.0 && y <= self.s && y.fract() == 0.0,
            FamilyKind::Gamma => y > 0.0,
        }
    }

    fn out_of_support(&self, value: f64) -> Error {
        Error::OutOfSupport {
            family: self.to_string(),
            value,
        }
    }
}

pub fn qvf_coefficients(f: &Family) -> QvfCoefficients {
    let (b0, b1, b2) = match f.kind {
        FamilyKind::Normal => (1.0, 0.0, 0.0),
        FamilyKind::Poisson => (0.0, 1.0, 0.0),
        FamilyKind::Binomial => (0.0, 1.0, -1.0 / f.s),
        FamilyKind::NegBin => (0.0, 1.0, 1.0 / f.s),
        FamilyKind::Gamma => (0.0, 0.0, 1.0 / f.s),
        FamilyKind::Ghs => (f.s, 0.0, 1.0 / f.s),
    };
    QvfCoefficients { b0, b1, b2 }
}

/// The transform `v` with `E[v(y)] = Var[y]`.
pub fn v_value(f: &Family, y: f64) -> f64 {
    let s = f.s;
    match f.kind {
        FamilyKind::Normal => 1.0,
        FamilyKind::Poisson => y,
        FamilyKind::Binomial => (s * y - y * y) / (s - 1.0),
        FamilyKind::NegBin => (s * y + y * y) / (s + 1.0),
        FamilyKind::Gamma => y * y / (1.0 + s),
        FamilyKind::Ghs => (s * s + y * y) / (1.0 + s),
    }
}

/// Variance at mean `theta`.
pub fn variance_from_mean(f: &Family, theta: f64) -> Result<f64> {
    let s = f.s;
    let ok = theta.is_finite()
        && match f.kind {
            FamilyKind::Normal | FamilyKind::Ghs => true,
            FamilyKind::Poisson | FamilyKind::NegBin | FamilyKind::Gamma => theta >= 0.0,
            FamilyKind::Binomial => (0.0..=s).contains(&theta),
        };
    if !ok {
        return Err(f.out_of_support(theta));
    }
    Ok(match f.kind {
        FamilyKind::Normal => 1.0,
        FamilyKind::Poisson => theta,
        // theta (s - theta) / s keeps the value exactly nonnegative on [0, s].
        FamilyKind::Binomial => theta * (s - theta) / s,
        FamilyKind::NegBin => theta + theta * theta / s,
        FamilyKind::Gamma => theta * theta / s,
        FamilyKind::Ghs => s + theta * theta / s,
    })
}

/// Canonical link `eta(theta)`.
pub fn natural_link(f: &Family, theta: f64) -> Result<f64> {
    let s = f.s;
    let interior = theta.is_finite()
        && match f.kind {
            FamilyKind::Normal | FamilyKind::Ghs => true,
            FamilyKind::Poisson | FamilyKind::NegBin | FamilyKind::Gamma => theta > 0.0,
            FamilyKind::Binomial => theta > 0.0 && theta < s,
        };
    if !interior {
        return Err(f.out_of_support(theta));
    }
    Ok(match f.kind {
        FamilyKind::Normal => theta,
        FamilyKind::Poisson => theta.ln(),
        FamilyKind::Binomial => {
            let p = theta / s;
            (p / (1.0 - p)).ln()
        }
        FamilyKind::NegBin => (theta / (s + theta)).ln(),
        FamilyKind::Gamma => -1.0 / theta,
        FamilyKind::Ghs => (theta / s).atan(),
    })
}

impl Family {
    pub fn qvf_coefficients(&self) -> QvfCoefficients {
        qvf_coefficients(self)
    }

    pub fn v(&self, y: f64) -> f64 {
        v_value(self, y)
    }

    pub fn variance(&self, theta: f64) -> Result<f64> {
        variance_from_mean(self, theta)
    }

    pub fn link(&self, theta: f64) -> Result<f64> {
        natural_link(self, theta)
    }
}
