use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("ill-posed topology: neighbor distance {distance} requires more than {n_ranks} ranks")]
    IllPosedTopology { distance: usize, n_ranks: usize },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("insufficient points: need at least {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("mismatched scenarios: {0}")]
    MismatchedScenarios(String),

    #[error("zero denominator in propagation speed model")]
    ZeroDenominator,

    #[error("malformed trace: {0}")]
    MalformedTrace(String),

    #[error("sweep run {value} (seed {seed}) failed: {source}")]
    SweepRun {
        value: String,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable identifier, used by the CLI's one-line error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidScenario(_) => "invalid_scenario",
            Error::IllPosedTopology { .. } => "ill_posed_topology",
            Error::Config { .. } => "config",
            Error::UnknownPreset(_) => "unknown_preset",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::InsufficientPoints { .. } => "insufficient_points",
            Error::MismatchedScenarios(_) => "mismatched_scenarios",
            Error::ZeroDenominator => "zero_denominator",
            Error::MalformedTrace(_) => "malformed_trace",
            Error::SweepRun { .. } => "sweep_run",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
