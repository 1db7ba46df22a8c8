use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller violated an operation's precondition (bad dimensions, empty input, ...).
    #[error("usage error: {0}")]
    Usage(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A quantity left its mathematical domain, e.g. a log-determinant of a
    /// matrix that is not positive definite.
    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    #[error("SGD diverged on rating (user {user}, item {item}, value {rating})")]
    SgdDivergence { user: usize, item: usize, rating: f64 },

    #[error("ADMM diverged at iteration {iteration}")]
    AdmmDivergence { iteration: usize },

    /// Failure inside one phase of the alternating outer loop.
    #[error("{phase} phase of outer iteration {iteration}: {source}")]
    Phase {
        phase: &'static str,
        iteration: usize,
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    /// True for errors that indicate the optimizer left the finite domain.
    pub fn is_divergence(&self) -> bool {
        match self {
            Error::SgdDivergence { .. } | Error::AdmmDivergence { .. } => true,
            Error::Phase { source, .. } => source.is_divergence(),
            _ => false,
        }
    }
}
