use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error(transparent)]
    Evaluation(#[from] cfcc_core::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
