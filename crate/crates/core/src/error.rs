use thiserror::Error;

/// Errors raised by the optimizer, the model interface and the metrics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty support: every log-score is -inf")]
    EmptySupport,
    #[error("no viable continuation: every candidate has zero probability")]
    NoViableContinuation,
    #[error("particle set is empty")]
    EmptySet,
    #[error("inconsistent multiplicities: {0}")]
    InconsistentMultiplicity(String),
    #[error("enumeration needs {required} assignments, cap is {cap}")]
    CapExceeded { required: u128, cap: u128 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty input")]
    EmptyInput,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("sufficient-statistics underflow: {0}")]
    StatsUnderflow(String),
    #[error("scoring particle {particle} at variable {variable}: {source}")]
    Scoring {
        particle: usize,
        variable: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn at(self, particle: usize, variable: usize) -> Self {
        Error::Scoring {
            particle,
            variable,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
