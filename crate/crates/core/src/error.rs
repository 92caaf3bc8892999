use thiserror::Error;

/// Errors raised anywhere in the search engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("ingestion error at line {line}: {detail}")]
    Ingestion { line: usize, detail: String },

    #[error("invalid architecture in slot `{slot}`: {detail}")]
    Validation { slot: String, detail: String },

    #[error("training diverged at epoch {epoch}: {detail}")]
    Training { epoch: usize, detail: String },

    #[error("config field `{field}`: {detail}")]
    Config { field: String, detail: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub(crate) fn validation(slot: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Validation { slot: slot.into(), detail: detail.into() }
    }

    pub(crate) fn config(field: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Config { field: field.into(), detail: detail.into() }
    }
}
