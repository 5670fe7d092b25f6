use thiserror::Error;

/// Errors raised by the library. Empty fibers and obstructed loops are values, not errors.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("frame is not orthogonal (deviation {0:.3e})")]
    NotOrthogonal(f64),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("frames are incompatible for this jet (normalized minor {0:.3e})")]
    Incompatible(f64),

    #[error("degenerate cluster: distinct samples share a projection")]
    DegenerateCluster,

    #[error("loop resolution too coarse: {0}")]
    Resolution(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
