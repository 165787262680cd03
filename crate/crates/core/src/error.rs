use thiserror::Error;

/// Errors raised by the simulation and fitting routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Caller supplied an invalid argument or an inconsistent structure.
    #[error("invalid input: {0}")]
    Input(String),
    /// A numerical routine failed (singular system, eigensolver stall, ...).
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// The data do not constrain the requested parameters.
    #[error("parameters not identifiable: {0}")]
    NotIdentifiable(String),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
