use thiserror::Error;

/// Errors raised by the capacity toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid channel matrix: {0}")]
    InvalidChannel(String),

    #[error("invalid input distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid uncertainty model: {0}")]
    InvalidModel(String),

    #[error("perturbation vector outside the declared set: {0}")]
    OutsideSet(String),

    #[error("entry Q[{row}][{col}] = {value:e} is not positive")]
    NonPositiveEntry { row: usize, col: usize, value: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid cost constraint: {0}")]
    Cost(String),

    #[error("{what} did not converge after {iterations} iterations ({detail})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        detail: String,
    },

    #[error("non-finite value at iteration {iteration}: {detail}")]
    NonFinite { iteration: usize, detail: String },

    #[error("model inconsistency: {0}")]
    Inconsistent(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
