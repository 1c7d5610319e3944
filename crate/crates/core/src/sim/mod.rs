//! Seeded simulation scenarios and the replication harness.

mod harness;
mod rng;
mod scenario;

pub use harness::{harness_dk, median, quantile, run_one, run_replications, RepFailure, RepRecord, ReplicationStats};
pub use rng::{rep_rng, sample, Dist, SimRng, RNG_ALGORITHM};
pub use scenario::{
    binomial_fixed_m, generate_scenario, true_dk, FixedRank, Scenario, ScenarioConfig, ScenarioDraw,
    BINOMIAL_S, GAMMA_S, NEGBIN_S,
};
