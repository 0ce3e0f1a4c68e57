use thiserror::Error;

use crate::solver::Solution;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("state error: {0}")]
    State(String),

    #[error("mollification level error: {0}")]
    Level(String),

    /// The solver ran out of iterations; the last iterate is kept for inspection.
    #[error("iteration limit reached after {iterations} sweeps (residual {residual:.3e})")]
    IterationLimit {
        iterations: usize,
        residual: f64,
        last: Box<Solution>,
    },

    #[error("comparison chain failed at stage {stage}: {source}")]
    Chain {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("sequence level {level} failed: {source}")]
    SequenceLevel {
        level: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be finite, got {value}")))
    }
}
