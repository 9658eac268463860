//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("integration failure: non-finite state or derivative at t = {t}")]
    IntegrationFailure { t: f64 },

    #[error("integration failure in shooting interval {interval}: {source}")]
    IntervalFailure {
        interval: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("step size underflow at t = {t} (h = {h:e}); the problem may be stiff")]
    StepUnderflow { t: f64, h: f64 },

    #[error("gradient failure: non-finite partial at tape node {node}")]
    GradientFailure { node: usize },

    #[error("objective evaluated to a non-finite value")]
    NonFiniteObjective,

    #[error("invalid network architecture: {0}")]
    InvalidArchitecture(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid shooting grid: {0}")]
    InvalidGrid(String),

    #[error("decision initialization failed: {0}")]
    InitFailure(String),

    #[error("data format error: {0}")]
    Format(String),

    #[error("incompatible checkpoint: {0}")]
    Checkpoint(String),

    #[error("optimizer error: {0}")]
    Optimizer(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
