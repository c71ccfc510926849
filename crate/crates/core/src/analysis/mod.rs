//! Gait instruments: spread of babbled foot positions, detrended fluctuation
//! analysis, walking statistics and significance testing.

mod dfa;
mod spread;
mod stats;

use thiserror::Error;

pub use dfa::{default_scales, dfa, endpoint_distance_series, DfaOptions, DfaResult};
pub use spread::{spread, Polygon, SpreadResult, PIXEL_SIZE};
pub use stats::{trial_stats, two_sample_test, TrialStats, WelchResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("region has no area")]
    DegenerateRegion,
    #[error("series of {got} samples is too short, need {min}")]
    SeriesTooShort { min: usize, got: usize },
    #[error("series is constant")]
    ConstantSeries,
    #[error("invalid scales: {0}")]
    InvalidScales(String),
    #[error("need at least {min} values per group, got {got}")]
    InsufficientData { min: usize, got: usize },
}
