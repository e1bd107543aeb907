use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("quadrature did not converge: {msg} (best estimate {best}, error estimate {err_estimate:e})")]
    Convergence {
        msg: String,
        best: Complex64,
        err_estimate: f64,
    },

    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("extraction failed: {0}")]
    ExtractionFailure(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
