use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("iterative solve did not converge: {0}")]
    SolverFailure(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("partial SVD did not converge: {message}")]
    NotConverged { message: String, partial: Box<crate::partial_svd::PartialSvd> },
    #[error("no solution: {0}")]
    NoSolution(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::Dimension(format!("{what}: length {got}, expected {want}")))
    }
}
