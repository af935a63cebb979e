use std::io;

use thiserror::Error;

/// Errors produced by the library.
///
/// The variants are grouped so that the CLI can map them onto exit codes:
/// validation and I/O problems are data errors, `Numeric` is a numeric failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("similarity undefined: both rows are zero")]
    UndefinedSimilarity,

    #[error("edge noise rate undefined for isolated node {0}")]
    IsolatedNode(usize),

    #[error("node id {id} out of range for {n} nodes")]
    NodeOutOfRange { id: usize, n: usize },

    #[error("infeasible bound: {0}")]
    InfeasibleBound(String),

    #[error("numeric failure in layer {layer}: {what}")]
    Numeric { layer: usize, what: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
