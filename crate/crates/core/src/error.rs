use thiserror::Error;

/// Errors raised by datasets, geometries, optimizers and oracles.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("point outside the potential domain at coordinate {index} (value {value})")]
    Domain { index: usize, value: f64 },

    #[error("non-finite value encountered at iteration {iteration}: {what}")]
    NonFinite { iteration: usize, what: String },

    #[error("solver did not converge: {solver} (best residual {residual:e})")]
    NonConvergence { solver: String, residual: f64 },

    #[error("degenerate certificate: {0}")]
    Degenerate(String),

    #[error("flow left the domain at time {time}")]
    FlowDomainExit { time: f64 },

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::InvalidConfig(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
