use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate parameters: {0}")]
    Degenerate(String),

    #[error("state is not normalizable: {0}")]
    NotNormalizable(String),

    #[error("domain too small: {0}")]
    Domain(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("integration step too coarse: {steps} steps per period, need at least {required}")]
    StepTooCoarse { steps: usize, required: usize },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("propagation unstable: {0}")]
    Instability(String),

    #[error("linear solver failed: {0}")]
    Solver(String),

    #[error("truncation too small: {0}")]
    Truncation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
