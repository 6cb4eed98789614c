use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("covariance of group {group} is not positive definite")]
    NonPdCovariance { group: usize },

    /// The coefficient is too close to zero for a local quadratic weight;
    /// callers clamp it to exactly zero instead.
    #[error("|beta| = {0:e} is below the hard-zero threshold")]
    BelowThreshold(f64),

    #[error("variance component {component} diverged (bracket exceeded {limit:e})")]
    UnboundedVariance { component: usize, limit: f64 },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("internal consistency violation: {0}")]
    Internal(String),

    #[error("path cut off: residual variance collapsed or active set too large")]
    Degenerate,

    #[error("every fit on the regularization path failed")]
    PathFailed,

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
