use thiserror::Error;

/// Errors produced by the estimation pipelines and their inputs.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// The measurement-error model cannot be identified from the supplied data.
    #[error("not identifiable: {0}")]
    Identifiability(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Too many inner fits failed (SIMEX or bootstrap loops).
    #[error("estimator failure: {0}")]
    EstimatorFailure(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Shape(_) => "shape",
            Error::Identifiability(_) => "identifiability",
            Error::Numeric(_) => "numeric",
            Error::EstimatorFailure(_) => "estimator_failure",
            Error::Config(_) => "config",
            Error::Data(_) => "data",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }

    /// The error text without its class prefix.
    pub fn message(&self) -> String {
        match self {
            Error::InvalidArgument(m)
            | Error::Shape(m)
            | Error::Identifiability(m)
            | Error::Numeric(m)
            | Error::EstimatorFailure(m)
            | Error::Config(m)
            | Error::Data(m) => m.clone(),
            Error::Io(e) => e.to_string(),
            Error::Csv(e) => e.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
