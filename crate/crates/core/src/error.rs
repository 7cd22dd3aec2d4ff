use thiserror::Error;

/// Errors produced by diagram validation, model construction, estimation,
/// sampling and queries.
#[derive(Debug, Error)]
pub enum Error {
    /// The causal diagram violates a structural requirement.
    #[error("structural error: {0}")]
    Structure(String),

    /// Model parameters violate a constraint (support, positivity, shape).
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Linear algebra failed: singular or badly conditioned matrix.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Estimation diverged at every retried step size. Carries the
    /// log-likelihood trace of the last attempt for post-mortems.
    #[error("estimation diverged: {message}")]
    Divergence {
        message: String,
        trace: Vec<f64>,
    },

    /// An interventional query references unknown nodes or is malformed.
    #[error("query error: {0}")]
    Query(String),

    /// A dataset is malformed or does not match the diagram.
    #[error("data error: {0}")]
    Data(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
