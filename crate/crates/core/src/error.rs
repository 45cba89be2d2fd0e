use alloc::boxed::Box;
use alloc::string::String;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A parameter or specification is outside its admissible domain.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// A numerical routine failed to converge or produced a non-finite value.
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// A quantity left the range guaranteed by the algorithm's construction.
    #[error("invariant violated: {0}")]
    Invariant(String),
    /// The run asked for more noise than was pre-generated.
    #[error("noise tape exhausted: trial {trial} but tape holds {len} entries")]
    TapeExhausted { trial: usize, len: usize },
    /// Failure inside a specific trial of a run.
    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }

    pub(crate) fn at_trial(self, trial: usize) -> Self {
        match self {
            e @ Error::Trial { .. } => e,
            e => Error::Trial {
                trial,
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
