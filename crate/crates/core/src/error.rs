use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument or input lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// An exhaustive computation was requested over a label space that is too large.
    #[error("label space of size {size} exceeds the limit of {limit}")]
    Capacity { size: u128, limit: u128 },
    /// A serialized value could not be decoded.
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
