use thiserror::Error;

/// Errors reported by the loader, the engine and the bench harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed source text; carries the line where scanning/parsing stopped.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: u32, msg: String },

    /// Ill-formed program-level declarations: assertion heads that do not
    /// match their predicate, undeclared properties, invalid regular programs.
    #[error("definition error: {0}")]
    Definition(String),

    /// Failures during goal evaluation (arithmetic on unbound terms,
    /// integer overflow, exceeded step budget).
    #[error("runtime error: {0}")]
    Runtime(String),

    /// Broken internal invariants (e.g. undo to an epoch never issued).
    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn parse(line: u32, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }

    pub fn definition(msg: impl Into<String>) -> Self {
        Error::Definition(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        Error::Runtime(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        Error::Internal(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
