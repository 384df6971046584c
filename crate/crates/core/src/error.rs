use thiserror::Error;

/// Errors raised by the valuation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid input: {0}")]
    Input(String),

    /// Exact enumeration was requested for a game that is too large.
    #[error("{n} players exceeds the exact-enumeration limit of {max}")]
    Capacity { n: usize, max: usize },

    /// A serialized game description could not be understood.
    #[error("malformed game description: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
