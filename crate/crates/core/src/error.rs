use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Non-finite input or an argument outside the function's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A matrix that must be symmetric positive definite is not.
    #[error("{0} is not symmetric positive definite")]
    NotSpd(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: String,
        expected: usize,
        actual: usize,
    },

    /// Gauss-Newton information matrix could not be factored.
    #[error("information matrix is rank deficient; unconstrained variables: {0:?}")]
    RankDeficient(Vec<usize>),

    /// Receiver coincides with an anchor, or similar degenerate geometry.
    #[error("singular geometry: {0}")]
    Singular(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("epoch {epoch}: {source}")]
    AtEpoch {
        epoch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("seed {seed}, estimator {estimator}: {source}")]
    InRun {
        seed: u64,
        estimator: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn at_epoch(self, epoch: usize) -> Self {
        Error::AtEpoch {
            epoch,
            source: Box::new(self),
        }
    }

    pub fn in_run(self, seed: u64, estimator: impl Into<String>) -> Self {
        Error::InRun {
            seed,
            estimator: estimator.into(),
            source: Box::new(self),
        }
    }
}
