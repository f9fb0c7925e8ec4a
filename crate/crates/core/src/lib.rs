//! Certified lower bounds, SOS certificates and approximate optimal arcs for
//! optimal control of switched polynomial systems.
//!
//! Each mode `j` of a switched system is represented by a modal occupation
//! measure on `(t, x)` (plus the mode's own controls, if any). Truncating the
//! moment sequences of these measures at degree `2d` yields a hierarchy of
//! semidefinite programs whose values are monotonically non-decreasing lower
//! bounds on the optimal cost. The pipeline is:
//!
//! 1. [`problem`]: load, validate and scale a [`problem::SwitchedProblem`];
//! 2. [`relaxation`]: assemble the order-`d` moment relaxation;
//! 3. [`sdp`]: solve it with the embedded primal-dual interior-point method;
//! 4. [`certificate`]: rebuild and check the dual polynomial certificate;
//! 5. [`extraction`]: recover duty cycles and way points and simulate them;
//! 6. [`report`]: sweep orders and emit tables.

pub mod certificate;
pub mod extraction;
pub mod poly;
pub mod problem;
pub mod relaxation;
pub mod report;
pub mod sdp;

mod error;

pub use error::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;
