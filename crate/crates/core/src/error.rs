use thiserror::Error;

use crate::engine::Traces;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates its documented domain.
    #[error("invalid parameter `{field}`: {reason}")]
    Parameter { field: String, reason: String },

    /// Metric undefined for the given signal (e.g. all zeros).
    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    #[error("non-finite value at step {step}: {what}")]
    Numeric { step: usize, what: String },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("state error: {0}")]
    State(String),

    /// The closed loop blew up. Partial traces up to `step` are attached.
    #[error("divergence at step {step}: |{signal}| = {value:e} exceeds guard {limit:e}")]
    Divergence {
        step: usize,
        signal: &'static str,
        value: f64,
        limit: f64,
        partial: Box<Traces>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
