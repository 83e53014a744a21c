use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a precondition (location outside the room, bad k, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Tensor/matrix dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A configuration file or value is invalid.
    #[error("config error: {0}")]
    Config(String),

    /// A binary or text artifact could not be decoded. `offset` is the byte
    /// offset of the first field that could not be read.
    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: u64, msg: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}, batch {batch}: {msg}")]
    Divergence {
        epoch: usize,
        batch: usize,
        msg: String,
    },

    /// A model was queried before `fit` succeeded.
    #[error("model not fitted: {0}")]
    NotFitted(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn parse(offset: u64, msg: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            msg: msg.into(),
        }
    }
}
