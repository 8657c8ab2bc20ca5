use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The training objective stopped being finite.
    #[error("training diverged at iteration {iteration}: objective is not finite")]
    Divergence { iteration: usize },

    /// A point with positive loss was assigned zero query probability, so its
    /// importance weight would be infinite.
    #[error("infinite importance weight at position {index}: loss {loss} with zero query probability")]
    InfiniteWeight { index: usize, loss: f64 },

    /// A data file could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Rows of a data file disagree on shape.
    #[error("schema error: {0}")]
    Schema(String),

    /// An error raised while running one iteration of the query loop.
    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Innermost loop iteration attached to this error, if any.
    pub fn iteration(&self) -> Option<usize> {
        match self {
            Error::Iteration { iteration, .. } => Some(*iteration),
            _ => None,
        }
    }
}
