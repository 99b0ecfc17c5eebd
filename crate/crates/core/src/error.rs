use thiserror::Error;

/// Errors surfaced by the numerical routines.
///
/// Variants are grouped so the command-line front end can map them onto exit
/// statuses: [`Error::is_validation`] covers malformed input, everything else
/// is a numerical-budget failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid projective point: {0}")]
    InvalidPoint(String),

    #[error("malformed family specification: {0}")]
    Malformed(String),

    #[error("family validation failed: {0}")]
    Validation(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("numerical budget exceeded: {0}")]
    Budget(String),

    #[error("non-finite observable at {count} atom(s), first indices {indices:?}")]
    NonFinite { count: usize, indices: Vec<usize> },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Malformed(_) | Error::Validation(_) | Error::Parse(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
