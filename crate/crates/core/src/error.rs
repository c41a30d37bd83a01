use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of a closed-form expression.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration rule is violated.
    #[error("invalid configuration: {rule}: {detail}")]
    Config { rule: &'static str, detail: String },

    /// The learning state machine was driven out of sequence.
    #[error("protocol violation: {0}")]
    Protocol(String),

    /// A run could not be set up, e.g. no event produced critical devices.
    #[error("run rejected: {0}")]
    RunRejected(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
