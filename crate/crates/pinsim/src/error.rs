//! Crate-wide error type.

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A speed measurement was unusable (non-positive or non-finite).
    /// The caller decides whether to skip the period or abort.
    #[error("measurement error: {0}")]
    Measurement(String),

    /// A game configuration violates the positive-utility contract.
    #[error("game configuration error: {0}")]
    Configuration(String),

    /// The game has too many pure profiles for exhaustive enumeration;
    /// callers should fall back to sampling.
    #[error("game too large: {profiles} pure profiles exceeds cap {cap}")]
    TooLarge { profiles: u128, cap: u128 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
