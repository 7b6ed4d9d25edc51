//! Monte-Carlo harness: scenario description, seeded trials, aggregate
//! metrics, sweeps and file output.

pub mod config;
pub mod emit;
pub mod metrics;
pub mod montecarlo;
pub mod scenario;

pub use config::{load_config, parse_config, ScenarioFile};
pub use metrics::{cdf_points, MetricsRecord, TrialRecord};
pub use montecarlo::{
    run_montecarlo, run_trial, run_trial_full, sweep, synth_trial, SweepAxis, TrialOutput,
};
pub use scenario::{CoarseMode, Scenario, TruthSpec};
