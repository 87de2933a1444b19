use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("schedule construction failed: {0}")]
    Schedule(String),

    #[error("time {time} lies outside [0, {end}]")]
    OutOfRange { time: f64, end: f64 },

    #[error("integration failed in segment {segment} at t = {time:.6}: {reason}")]
    Integration { segment: usize, time: f64, reason: String },

    #[error("unknown protocol `{0}`")]
    UnknownProtocol(String),

    #[error("unsupported combination: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
