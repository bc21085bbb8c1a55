use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("divergence at {what}: {detail}")]
    Divergence { what: String, detail: String },

    #[error("no resonance found: {0}")]
    NotFound(String),

    #[error("fit failed after {iterations} iterations: {reason}")]
    Fit {
        iterations: usize,
        reason: String,
        residual_trace: Vec<f64>,
    },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
