//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("autodiff error: {0}")]
    Autodiff(String),

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("simplification stopped at {achieved} vertices before reaching {target}: {reason}")]
    Simplify {
        achieved: usize,
        target: usize,
        reason: String,
    },

    #[error("parse error in {path} at line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("training diverged (non-finite loss) at fold {fold}, epoch {epoch}, step {step}")]
    Diverged {
        fold: usize,
        epoch: usize,
        step: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
