use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated an operation's precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The requested computation is not defined for this input
    /// (e.g. a moment that does not exist for the given law).
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// An exact computation was refused because it would exceed the
    /// enumeration or population guard.
    #[error("instance too large: {0}")]
    TooLarge(String),

    /// A simulation hit its population cap; carries the partial path
    /// produced before truncation.
    #[error("run truncated at step {step}: {reason}")]
    TruncatedRun { step: usize, reason: String, partial: Vec<f64> },

    /// A sampled value left the domain required by the statistic.
    #[error("domain error: {0}")]
    Domain(String),

    /// An internal invariant failed; indicates a bug, not bad input.
    #[error("internal error: {0}")]
    Internal(String),

    /// Configuration text could not be parsed.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
