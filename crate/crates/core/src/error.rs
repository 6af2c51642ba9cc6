use thiserror::Error;

/// Errors raised across the workbench.
#[derive(Debug, Error)]
pub enum Error {
    /// Unsupported or inconsistent configuration (modulation order, sizes).
    #[error("configuration error: {0}")]
    Config(String),
    /// A call argument violates the operation's precondition.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// Input outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    Domain(String),
    /// A numerical search did not find a solution in its bracket.
    #[error("search failed: {0}")]
    SearchFailed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

pub(crate) fn argument(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}
