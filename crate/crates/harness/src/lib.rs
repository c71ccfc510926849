//! Seeded batch experiments on the simulated babbling biped: configuration,
//! per-trial pipelines, persisted artifacts and run summaries.

pub mod artifacts;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod report;
pub mod trial;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
pub use experiment::run_experiment;
pub use report::{report, RunReport};
pub use trial::{run_trial, TrialRecord};
