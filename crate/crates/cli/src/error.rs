use sqg_galerkin::error::SqgError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("blow-up at t = {time} (last good state at t = {last_good_time})")]
    BlowUp { time: f64, last_good_time: f64 },
    #[error("I/O error: {0}")]
    Io(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Verification(_) => 3,
            CliError::BlowUp { .. } => 4,
            CliError::Io(_) => 5,
            CliError::Internal(_) => 1,
        }
    }
}

impl From<SqgError> for CliError {
    fn from(e: SqgError) -> Self {
        match e {
            SqgError::Config(msg) => CliError::Config(msg),
            SqgError::Domain(_) | SqgError::Precondition(_) => CliError::Config(e.to_string()),
            SqgError::BlowUp { time, last_good_time, .. } => CliError::BlowUp { time, last_good_time },
            SqgError::Io(_) | SqgError::Format(_) => CliError::Io(e.to_string()),
            SqgError::Shape { .. } | SqgError::Internal(_) => CliError::Internal(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
