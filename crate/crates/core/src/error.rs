use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("point maps to infinity (w = {0:e})")]
    PointAtInfinity(f64),
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("homography is not invertible (det = {0:e})")]
    Singular(f64),
    #[error("robust estimation failed: {0}")]
    EstimationFailed(String),
    #[error("missing input for setting {setting}: {what}")]
    MissingInput { setting: String, what: String },
    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: usize, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("malformed data: {0}")]
    Format(String),
}
