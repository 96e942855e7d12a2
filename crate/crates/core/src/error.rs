use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure in {stage}: {reason} (residual {residual:.3e})")]
    NumericFailure {
        stage: String,
        reason: String,
        residual: f64,
    },

    #[error("config error:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("stage '{stage}' failed: {source}")]
    Stage { stage: String, source: Box<Error> },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}

pub(crate) fn numeric_failure(stage: &str, reason: impl Into<String>, residual: f64) -> Error {
    Error::NumericFailure {
        stage: stage.to_string(),
        reason: reason.into(),
        residual,
    }
}
