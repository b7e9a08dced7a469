use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("feature schema mismatch: model was trained on {expected:?}, got {found:?}")]
    SchemaMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },

    #[error("{model} failed to converge ({reason}); offending columns: {columns:?}")]
    Convergence {
        model: &'static str,
        reason: String,
        columns: Vec<String>,
    },

    #[error(
        "targeting step did not converge after {iterations} iterations; epsilon trace: {trace:?}"
    )]
    Targeting { iterations: usize, trace: Vec<f64> },

    #[error("fit error in {model}: {reason}")]
    Fit { model: &'static str, reason: String },

    #[error("positivity violation: propensity {value} at row {row}")]
    Positivity { row: usize, value: f64 },

    #[error("data generating mechanism: {0}")]
    Generation(String),

    #[error("{what}: {failed} of {total} attempts failed")]
    TooManyFailures {
        what: &'static str,
        failed: usize,
        total: usize,
    },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn fit(model: &'static str, reason: impl Into<String>) -> Self {
        Error::Fit {
            model,
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad user input (files, config, schema) as
    /// opposed to numerical failures during estimation.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::SchemaMismatch { .. }
                | Error::MissingColumn(_)
                | Error::Parse(_)
                | Error::Config(_)
                | Error::Io { .. }
        )
    }
}
