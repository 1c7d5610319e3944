//! Simulation batch configuration.
//!
//! ```json
//! {"scenario": "poisson", "n": 15, "k": [1000, 10000], "r": 5, "reps": 50,
//!  "seed": 7, "scaling": {"c_tilde": 1.0, "eta": 0.3333, "scale": "auto"},
//!  "rank_mode": "auto", "output_dir": "out"}
//! ```
//!
//! `scenario`, `n`, `k` and `r` take a scalar or a list; the batch is their
//! cartesian product.

use std::path::PathBuf;

use latentspec::sim::{FixedRank, Scenario, ScenarioConfig};
use latentspec::ScalingConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

/// `"auto"` or `{"fixed": r}`. Under `"auto"` the fixed-rank column of the
/// output uses the true rank.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SimRankMode {
    #[default]
    Auto,
    Fixed(usize),
}

impl Serialize for SimRankMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        match self {
            SimRankMode::Auto => s.serialize_str("auto"),
            SimRankMode::Fixed(r) => {
                let mut m = s.serialize_map(Some(1))?;
                m.serialize_entry("fixed", r)?;
                m.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for SimRankMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Word(String),
            Fixed { fixed: usize },
        }
        match Repr::deserialize(d)? {
            Repr::Word(w) if w == "auto" => Ok(SimRankMode::Auto),
            Repr::Word(w) => Err(serde::de::Error::custom(format!(
                "rank_mode must be \"auto\" or {{\"fixed\": r}}, got \"{w}\""
            ))),
            Repr::Fixed { fixed } => Ok(SimRankMode::Fixed(fixed)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub scenario: Option<OneOrMany<Scenario>>,
    pub n: Option<OneOrMany<usize>>,
    pub k: Option<OneOrMany<usize>>,
    pub r: Option<OneOrMany<usize>>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub scaling: ScalingConfig,
    #[serde(default)]
    pub rank_mode: SimRankMode,
    pub output_dir: Option<PathBuf>,
}

fn default_reps() -> usize {
    50
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            scenario: None,
            n: None,
            k: None,
            r: None,
            reps: default_reps(),
            seed: 0,
            scaling: ScalingConfig::default(),
            rank_mode: SimRankMode::Auto,
            output_dir: None,
        }
    }
}

/// The full published grid: every scenario; `n = 15, 100` with `r = 1..5`
/// and `n = 200` with `r = 6, 8, 10, 12`; `k` from `10^3` to `10^5`; 100
/// replications.
pub const FULL_REPS: usize = 100;
pub const FULL_K: [usize; 4] = [1_000, 5_000, 10_000, 100_000];

fn full_nr() -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for n in [15, 100] {
        for r in 1..=5 {
            v.push((n, r));
        }
    }
    for r in [6, 8, 10, 12] {
        v.push((200, r));
    }
    v
}

impl SimConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::parse(format!("config: {e}")))
    }

    fn base(&self, scenario: Scenario, n: usize, k: usize, r: usize, reps: usize) -> ScenarioConfig {
        let mut c = ScenarioConfig::new(scenario, n, k, r, reps, self.seed).with_scaling(self.scaling);
        c.fixed_rank = match self.rank_mode {
            SimRankMode::Auto => FixedRank::True,
            SimRankMode::Fixed(v) => FixedRank::Value(v),
        };
        c
    }

    /// Expands the configuration into validated cells, in output order.
    pub fn cells(&self, full: bool) -> Result<Vec<ScenarioConfig>, CliError> {
        let mut out = Vec::new();
        if full {
            for sc in Scenario::ALL {
                for (n, r) in full_nr() {
                    for k in FULL_K {
                        out.push(self.base(sc, n, k, r, FULL_REPS));
                    }
                }
            }
        } else {
            let need = |name: &str| CliError::parse(format!("config: missing '{name}'"));
            let scenarios = self.scenario.as_ref().ok_or_else(|| need("scenario"))?.to_vec();
            let ns = self.n.as_ref().ok_or_else(|| need("n"))?.to_vec();
            let ks = self.k.as_ref().ok_or_else(|| need("k"))?.to_vec();
            let rs = self.r.as_ref().ok_or_else(|| need("r"))?.to_vec();
            for &sc in &scenarios {
                for &n in &ns {
                    for &r in &rs {
                        for &k in &ks {
                            out.push(self.base(sc, n, k, r, self.reps));
                        }
                    }
                }
            }
        }
        if out.is_empty() {
            return Err(CliError::parse("config: empty batch"));
        }
        for c in &out {
            c.validate().map_err(|e| {
                CliError::parse(format!(
                    "config: cell ({}, n={}, k={}, r={}): {e}",
                    c.scenario, c.n, c.k, c.r
                ))
            })?;
        }
        Ok(out)
    }
}
