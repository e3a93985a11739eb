use thiserror::Error;

use crate::eigenbasis::SpectralField;

#[derive(Debug, Error)]
pub enum SqgError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: usize, found: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A norm explosion or non-finite coefficient was detected. Carries the
    /// last finite state so callers can inspect it.
    #[error("blow-up detected at t = {time}")]
    BlowUp {
        time: f64,
        last_good_time: f64,
        last_good: Box<SpectralField>,
    },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SqgError>;

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(SqgError::Shape { expected, found })
    }
}
