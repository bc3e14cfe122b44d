use thiserror::Error;

/// Errors raised while building, simulating or validating a model.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("time {t} lies beyond the last tenor date {last}")]
    OutOfRange { t: f64, last: f64 },

    #[error("maturity {t} lies beyond the last curve pillar {last}; extrapolation is not supported")]
    Extrapolation { t: f64, last: f64 },

    #[error("degenerate rate: 1 + {delta} * {rate} <= 0")]
    DegenerateRate { delta: f64, rate: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("dependency error: {0}")]
    Dependency(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("integrability condition violated: {0}")]
    ConditionViolation(String),

    #[error("infeasible curve: {0}")]
    Infeasible(String),

    #[error("measure mismatch: {0}")]
    MeasureMismatch(String),

    #[error("bond with maturity {maturity} has matured before t = {t}")]
    Matured { t: f64, maturity: f64 },

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
