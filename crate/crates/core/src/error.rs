use thiserror::Error;

/// Errors produced by the model, estimator and IO layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("infeasible parameter: {0}")]
    Parameter(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("{path}: line {line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
