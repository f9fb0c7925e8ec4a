use thiserror::Error;

use crate::poly::PolyError;
use crate::problem::ProblemError;

/// Top-level error of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("relaxation: {0}")]
    Relaxation(String),
    #[error("sdp solver: {0}")]
    Solver(String),
    #[error("certificate: {0}")]
    Certificate(String),
    #[error("extraction: {0}")]
    Extraction(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Format(String),
}
