use thiserror::Error;

/// Errors produced by the voxwind library.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed PGM or CSV input. `offset` is the byte offset where parsing failed.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    /// A configuration field violates its documented range. `field` is a dotted path.
    #[error("invalid value for `{field}`: {message}")]
    InvalidConfig { field: String, message: String },

    #[error("grid of {grid_m:?} m does not fit inside the tunnel domain {domain_m:?} m")]
    GridTooLarge { grid_m: [f64; 3], domain_m: [f64; 3] },

    #[error("rollout buffer holds {len} records, fewer than one minibatch of {batch_size}")]
    BufferTooShort { len: usize, batch_size: usize },

    #[error("environment failed at step {step}: {source}")]
    Env {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Zero(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(offset: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn mismatch(expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
