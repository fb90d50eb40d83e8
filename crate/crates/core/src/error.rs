use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The requested quantity belongs to a different asymptotic regime.
    #[error("{quantity} undefined: {hint}")]
    Regime { quantity: &'static str, hint: String },

    #[error("quadrature did not converge: estimated error {achieved:.3e} exceeds tolerance {requested:.3e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("ill-conditioned fit: {0}")]
    IllConditioned(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("{0}")]
    Precondition(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
