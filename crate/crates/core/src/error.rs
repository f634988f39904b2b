use thiserror::Error;

#[derive(Debug, Error)]
pub enum PhcmError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("unsupported fiber dimension {0} (must be 1, 2 or 3)")]
    FiberDim(usize),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("form degree error: {0}")]
    Degree(String),

    #[error("kind mismatch: {0}")]
    Kind(String),

    #[error("non-positive mass density at node {node}: {value}")]
    Mass { node: usize, value: f64 },

    #[error("non-invertible deformation at node {node}: det F = {det}")]
    Fold { node: usize, det: f64 },

    #[error("configuration fold-over at step {step}")]
    FoldStep { step: usize },

    #[error("port error: {0}")]
    Port(String),

    #[error("network error: {0}")]
    Network(String),

    #[error("constitutive error: {0}")]
    Constitutive(String),

    #[error("fixed-point iteration did not converge after {iters} iterations (residual trace: {trace:?})")]
    NoConvergence { iters: usize, trace: Vec<f64> },

    #[error("metric lost positive definiteness at node {node} during step {step}")]
    SpdLoss { node: usize, step: usize },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("config error in field `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PhcmError>;
