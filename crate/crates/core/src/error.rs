use thiserror::Error;

/// Errors raised by the operator algebra, simulators and estimators.
#[derive(Debug, Error)]
pub enum HinvError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("basis mismatch between operands")]
    BasisMismatch,

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("operator is not symmetric (relative asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("operator is not positive semi-definite (smallest eigenvalue {0:.3e})")]
    NotPsd(f64),

    #[error("{what} = {value} out of range [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: usize,
        min: usize,
        max: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("stationarity bound violated: {what} = {value:.6} (must be < 1)")]
    Stationarity { what: &'static str, value: f64 },

    #[error("series did not converge within {0} terms")]
    NonConvergent(usize),

    #[error("ragged block grid: {0}")]
    RaggedBlocks(String),

    #[error("operator list too short: need {required} operators, have {found}")]
    TooShort { required: usize, found: usize },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HinvError>;
