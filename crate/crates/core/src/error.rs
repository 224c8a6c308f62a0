use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the simulation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite (smallest eigenvalue {smallest:e})")]
    NotPositiveDefinite { smallest: f64 },

    #[error("CFL violation: dt = {dt:e} exceeds the {constraint} limit {limit:e}")]
    Cfl {
        constraint: String,
        dt: f64,
        limit: f64,
    },

    #[error("non-finite value detected in {0}")]
    NonFinite(String),

    #[error(
        "pressure solve did not converge in {iterations} iterations (last relative residual {:e})",
        residual_history.last().copied().unwrap_or(f64::NAN)
    )]
    PoissonNotConverged {
        iterations: usize,
        residual_history: Vec<f64>,
    },

    #[error(
        "Picard iteration did not converge in {iterations} iterations (residual {residual:e}); retry with a smaller dt"
    )]
    PicardNotConverged { iterations: usize, residual: f64 },

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("empty history")]
    EmptyHistory,

    #[error("step {step} (t = {time}): {source}")]
    AtStep {
        step: u64,
        time: f64,
        snapshot: Option<PathBuf>,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// True for failures caused by the numerics rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Cfl { .. }
            | Error::NonFinite(_)
            | Error::PoissonNotConverged { .. }
            | Error::PicardNotConverged { .. } => true,
            Error::AtStep { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
