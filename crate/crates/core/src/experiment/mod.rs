//! Config parsing, multi-seed runs and verification suites.

pub mod config;
pub mod run;
pub mod verify;

pub use config::{ExperimentConfig, PRESETS};
pub use run::{metrics_csv, run_experiment, run_seed, ExperimentSummary};
pub use verify::{verify, SuiteReport};
