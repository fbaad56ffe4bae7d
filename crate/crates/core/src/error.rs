use thiserror::Error;

/// Errors raised anywhere in the ranking stack.
///
/// Each variant belongs to one [`ErrorCategory`], which the command-line
/// driver maps to a process exit code.
#[derive(Debug, Error)]
pub enum LtcsError {
    #[error("config error: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("state error: {0}")]
    State(String),
    #[error("resource error: {0}")]
    Resource(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numerical,
    Protocol,
    Other,
}

impl LtcsError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            LtcsError::Config(_) | LtcsError::InvalidParameter(_) => ErrorCategory::Config,
            LtcsError::InvalidArgument(_)
            | LtcsError::Data(_)
            | LtcsError::Checkpoint(_)
            | LtcsError::Io(_) => ErrorCategory::Data,
            LtcsError::Numerical(_) => ErrorCategory::Numerical,
            LtcsError::Protocol(_) | LtcsError::State(_) => ErrorCategory::Protocol,
            LtcsError::Resource(_) => ErrorCategory::Other,
        }
    }
}

pub type Result<T> = std::result::Result<T, LtcsError>;
