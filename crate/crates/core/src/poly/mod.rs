//! Sparse multivariate polynomials over `(t, x, ...)`.

mod index;
mod parse;
mod polynomial;
mod space;

pub use index::{binomial, monomials_of_degree, monomials_on, monomials_up_to, MultiIndex};
pub use parse::parse_polynomial;
pub use polynomial::{lie_derivative, poly_arith, ArithOp, Polynomial};
pub use space::{Role, VariableSpace};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("parse error at character {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("unknown variable '{0}'")]
    UnknownVariable(String),
    #[error("polynomials live in different variable spaces")]
    SpaceMismatch,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid variable space: {0}")]
    InvalidSpace(String),
}
