//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Geometric precondition violated (negative extent, non-finite coordinate).
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    /// Prompt template placeholder problem.
    #[error("template error: {0}")]
    Template(String),

    /// Neither parse tier produced a screening decision.
    #[error("screen parse error: {0}")]
    ScreenParse(String),

    /// Backend could not be reached after the bounded retries.
    #[error("backend unavailable after {attempts} attempts: {message}")]
    BackendUnavailable { attempts: u32, message: String },

    /// Backend answered but outside the wire contract.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// Scripted backend had no entry for a requested call.
    #[error("scripted backend missing key: {0}")]
    ScriptMissing(String),

    /// Operation called outside its stated precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Configuration or startup problem.
    #[error("config error: {0}")]
    Config(String),

    /// A value failed its own type contract (e.g. canonicalizing an invalid plan).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Evaluation input could not be read or parsed.
    #[error("eval input error: {0}")]
    EvalInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for transport-level failures worth retrying.
    pub fn is_retriable(&self) -> bool {
        matches!(self, Error::BackendUnavailable { .. })
    }
}
