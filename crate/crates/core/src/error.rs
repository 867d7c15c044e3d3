use thiserror::Error;

/// Errors raised by the geometry, solver and report layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    /// Evaluation point lies outside the chart domain of the model.
    #[error("point {coords:?} lies outside the chart domain of model `{model}`")]
    Domain { model: String, coords: Vec<f64> },
    /// Metric failed the positive-definiteness check.
    #[error("metric is not positive definite at {coords:?}")]
    Geometry { coords: Vec<f64> },
    /// Invalid model specification.
    #[error("invalid model specification: {0}")]
    Spec(String),
    /// Construction of a numerical soliton failed.
    #[error("soliton construction failed: {0}")]
    Construction(String),
    /// The warped-product shooting degenerated before the requested radius.
    #[error("shooting degenerated at r = {r}: {reason}")]
    Shooting { r: f64, reason: String },
    /// An ODE integration failed (step underflow, first-integral drift, ...).
    #[error("integration failed: {0}")]
    Integration(String),
    /// An operation was called with inputs outside its contract.
    #[error("usage error: {0}")]
    Usage(String),
    /// Solver did not converge.
    #[error("no convergence: {0}")]
    NonConvergence(String),
    /// Data inconsistent with a valid run.
    #[error("data error: {0}")]
    Data(String),
    /// Too few records for an aggregate.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    /// Configuration error, carrying the offending field path.
    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },
    /// File-system or serialization failure.
    #[error("io error: {0}")]
    Io(String),
    /// Report artifacts are missing.
    #[error("missing experiment outputs: {}", .0.join(", "))]
    MissingFiles(Vec<String>),
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

impl From<csv::Error> for LabError {
    fn from(e: csv::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for LabError {
    fn from(e: serde_json::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
