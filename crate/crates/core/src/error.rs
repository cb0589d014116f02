use thiserror::Error;

/// Errors raised by the collocation, assembly and solver layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// A configured size cap would be exceeded.
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("assembly failed: {0}")]
    Assembly(String),

    #[error("solver failed: {0}")]
    Solver(String),

    /// Level-ordering violation in the collocation sweep.
    #[error("level barrier violated: {0}")]
    Barrier(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}
