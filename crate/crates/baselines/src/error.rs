use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("filter degenerate: every particle has zero weight at step {step}")]
    FilterDegenerate { step: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Model(#[from] dpvi_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
