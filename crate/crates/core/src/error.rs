use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("block layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("invalid block layout: {0}")]
    InvalidLayout(String),

    #[error("non-finite coordinate at index {0}")]
    NonFinite(usize),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point outside operator domain ({op}): {detail}")]
    OutsideDomain { op: String, detail: String },

    #[error("operator {0} has no fixed-set projector")]
    MissingProjector(String),

    #[error("regularity estimate degenerate: {0}")]
    DegenerateEstimate(String),

    #[error("backward products did not contract within horizon {horizon} (row disagreement {disagreement:e})")]
    NonContraction { horizon: usize, disagreement: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("inconsistent linear system: residual {0:e}")]
    InconsistentSystem(f64),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("scenario validation failed: {0}")]
    Validation(String),

    #[error("iterates diverged at k = {k} (|x| > {limit:e})")]
    Divergence { k: usize, limit: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
