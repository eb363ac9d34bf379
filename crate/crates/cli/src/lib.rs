//! Experiment runner for the nlsdecay solver: versioned TOML configs,
//! checkpointed scenario pipelines, decay fits and the acceptance checks.

// `!(x > 0.0)` is used on purpose so NaN fails validation too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod config;
pub mod exponents;
pub mod report;
pub mod runner;
pub mod verify;

pub use artifacts::{RunManifest, RunStatus};
pub use config::{parse_config, parse_config_str, ConfigError, ExperimentConfig, Scenario};
pub use report::{fit_and_report, FitReport};
pub use runner::{resume, run_scenario, RunOptions, RunOutcome};
