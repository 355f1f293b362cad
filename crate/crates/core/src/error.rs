use std::io;

use crate::stability::Classification;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("attempt count {tau} outside success table range [0, {tau_max}]")]
    OutOfRange { tau: usize, tau_max: usize },

    #[error("malformed success table at line {line}: {reason}")]
    Malformed { line: usize, reason: String },

    #[error("success table row tau={tau} is invalid: {reason}")]
    InvalidRow { tau: usize, reason: String },

    #[error("delay is not defined for a {0} channel")]
    NotApplicable(Classification),

    #[error("first entry time system is singular: {0}")]
    Singular(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
