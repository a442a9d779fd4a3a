//! Scenario-driven simulation and estimation harness for the ellipsoidal
//! attitude filter: ground truth, corrupted measurements, filter runs,
//! convergence checks, and machine-readable reports.

pub mod cli;
pub mod monte_carlo;
pub mod report;
pub mod run;
pub mod scenario;
pub mod simulate;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    /// A scenario field violates its invariant.
    #[error("invalid scenario field `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("parse error: {0}")]
    Parse(String),
    /// Bad input other than a field invariant (missing file, bad arguments).
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
    /// The filter stopped at a measurement instant.
    #[error("filter failed at measurement instant {instant}: {message}")]
    Filter { instant: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl SimError {
    /// Process exit code: 1 for validation errors, 2 for runtime errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Invalid { .. } | SimError::Parse(_) | SimError::Validation(_) => 1,
            SimError::Runtime(_) | SimError::Filter { .. } | SimError::Io(_) => 2,
        }
    }
}
