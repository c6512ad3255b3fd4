use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid configuration: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: operands live on different grids")]
    GridMismatch,

    #[error("shape mismatch: expected {expected} values, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("invalid potentials: {0}")]
    InvalidPotentials(String),

    #[error("sigma kernel is not positive at pair ({i}, {j}): sigma = {value}")]
    NonPositiveSigma { i: usize, j: usize, value: f64 },

    #[error("invalid sigma kernel: {0}")]
    InvalidSigma(String),

    #[error("conductivity must be positive and equal to 1 off the domain: {0}")]
    InvalidConductivity(String),

    #[error("gauge function outside the admissible group: {0}")]
    InvalidGaugeFunction(String),

    #[error("no gauge partner construction available: {0}")]
    NoGaugePartner(String),

    #[error(
        "well-posedness violated: 0 is numerically an eigenvalue of the interior problem \
         (condition estimate {condition:.3e} exceeds {limit:.0e})"
    )]
    WellPosedness { condition: f64, limit: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
