//! Switched optimal control problems: model, file format, validation and scaling.

mod file;
mod model;
mod scale;
mod validate;

pub use file::{load_problem, parse_problem};
pub use model::*;
pub use scale::{augment_ball, scale, unscale, Scaling};
pub use validate::validate;

use thiserror::Error;

use crate::poly::PolyError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("schema error at '{path}': {message}")]
    Schema { path: String, message: String },
    #[error("in '{path}': {source}")]
    Parse { path: String, source: PolyError },
    #[error("{0}")]
    Validation(String),
}
