use thiserror::Error;

/// Errors raised anywhere in the model, estimation or IO layers.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("inconsistent state: {0}")]
    Inconsistent(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        what: String,
        iterations: usize,
        residual: f64,
    },

    #[error("rank deficiency: {0}")]
    RankDeficiency(String),

    #[error("schema error in {file}: {message}")]
    Schema { file: String, message: String },

    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {file}: {source}")]
    Csv {
        file: String,
        #[source]
        source: csv::Error,
    },

    #[error("json error in {file}: {source}")]
    Json {
        file: String,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, ModelError>;

pub(crate) fn domain(msg: impl Into<String>) -> ModelError {
    ModelError::Domain(msg.into())
}

pub(crate) fn invalid(msg: impl Into<String>) -> ModelError {
    ModelError::Invalid(msg.into())
}

pub(crate) fn inconsistent(msg: impl Into<String>) -> ModelError {
    ModelError::Inconsistent(msg.into())
}

pub(crate) fn rank(msg: impl Into<String>) -> ModelError {
    ModelError::RankDeficiency(msg.into())
}
