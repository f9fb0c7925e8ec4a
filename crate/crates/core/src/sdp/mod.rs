//! Dense primal-dual interior-point solver for the assembled relaxations, and
//! SDPA sparse-format export.
//!
//! The equality rows are eliminated once (`y = y0 + N w` with `N` spanning the
//! null space of `A`), and the remaining linear matrix inequality in `w` is
//! solved with the HKM direction and Mehrotra's predictor-corrector scheme.

mod ipm;
mod sdpa;

pub use ipm::solve;
pub use sdpa::{export_sdpa, read_sdpa, to_sdpa, write_sdpa, SdpaProblem};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Relative duality gap at which an iterate is accepted.
    pub gap_tol: f64,
    /// Relative primal and dual infeasibility at which an iterate is accepted.
    pub feas_tol: f64,
    pub max_iters: usize,
    /// Fraction of the distance to the PSD boundary taken per step.
    pub step_fraction: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            gap_tol: 1e-8,
            feas_tol: 1e-8,
            max_iters: 200,
            step_fraction: 0.98,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> crate::Result<()> {
        let ok = self.gap_tol > 0.0
            && self.feas_tol > 0.0
            && self.step_fraction > 0.0
            && self.step_fraction < 1.0
            && self.max_iters > 0;
        if ok {
            Ok(())
        } else {
            Err(crate::Error::Solver(format!("invalid settings {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    MaxIters,
    InfeasibleDetected,
    UnboundedDetected,
    /// The Newton system became too ill-conditioned to make progress before
    /// the tolerances were met.
    Stalled,
}

impl SolveStatus {
    pub fn is_optimal(&self) -> bool {
        *self == SolveStatus::Optimal
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::MaxIters => "max-iters",
            SolveStatus::InfeasibleDetected => "infeasible-detected",
            SolveStatus::UnboundedDetected => "unbounded-detected",
            SolveStatus::Stalled => "stalled",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SDPSolution {
    /// Moment vector.
    pub y: Vec<f64>,
    /// Multipliers of the equality rows, in row order.
    pub z: Vec<f64>,
    /// Gram matrices, one per PSD block.
    pub gram: Vec<DMatrix<f64>>,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    /// Relative primal infeasibility of the final iterate.
    pub primal_infeasibility: f64,
    /// Relative dual infeasibility of the final iterate.
    pub dual_infeasibility: f64,
    pub relative_gap: f64,
}
