//! Order-`d` moment relaxation: one truncated moment sequence per measure,
//! moment and localizing matrices as linear matrix forms, linear rows from the
//! test monomials and the support equalities, and the linear cost.
//!
//! The relaxation is built from a scaled problem (every variable in `[-1, 1]`).

mod assemble;
mod layout;

pub use assemble::{assemble, dynamics_rows, integral_rows, localizing_blocks, support_rows};
pub use layout::{build_layout, needs_terminal_measure, Measure, MeasureLayout, MeasureRole, Rule};

use nalgebra::DMatrix;

use crate::poly::{MultiIndex, Polynomial};
use crate::problem::{InitialSpec, SwitchedProblem, TerminalSpec};

/// Coefficient `coeff` of moment `var` at entry `(row, col)`, `row <= col`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatrixTerm {
    pub row: usize,
    pub col: usize,
    pub var: usize,
    pub coeff: f64,
}

/// Symmetric matrix `F0 + sum_k y_k F_k` stored by its upper triangle.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearMatrixForm {
    pub size: usize,
    /// Upper-triangle entries of `F0`.
    pub constant: Vec<(usize, usize, f64)>,
    pub terms: Vec<MatrixTerm>,
}

impl LinearMatrixForm {
    pub fn evaluate(&self, y: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.size, self.size);
        for &(r, c, v) in &self.constant {
            m[(r, c)] += v;
            if r != c {
                m[(c, r)] += v;
            }
        }
        for t in &self.terms {
            let v = t.coeff * y[t.var];
            m[(t.row, t.col)] += v;
            if t.row != t.col {
                m[(t.col, t.row)] += v;
            }
        }
        m
    }

    pub fn min_eigenvalue(&self, y: &[f64]) -> f64 {
        let m = self.evaluate(y);
        m.symmetric_eigenvalues().min()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BlockKind {
    /// `M_{d - ceil(deg g / 2)}(g y)` of a measure. `constraint` indexes the
    /// measure's support inequalities (`None` for the moment matrix) and
    /// `weight` is the polynomial actually used, after reduction by the
    /// measure's rules and normalization.
    Localizing {
        measure: usize,
        constraint: Option<usize>,
        weight: Polynomial,
        basis: Vec<MultiIndex>,
    },
    /// `1 x 1` block of an integral inequality.
    Integral { constraint: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PsdBlock {
    pub kind: BlockKind,
    pub form: LinearMatrixForm,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RowKind {
    /// Test monomial `v_alpha` over `(t, x)`.
    Dynamics(MultiIndex),
    /// Unit mass of a boundary measure.
    Normalization(usize),
    /// `L(h m) = 0` for support equality `h` of a measure and multiplier `m`.
    Support {
        measure: usize,
        equality: usize,
        multiplier: MultiIndex,
    },
    /// Prescribed moment of the initial distribution.
    InitialMoment(MultiIndex),
    /// Integral constraint with sense `=`.
    Integral(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EqualityRow {
    pub kind: RowKind,
    pub entries: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl EqualityRow {
    pub fn dot(&self, y: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, a)| a * y[i]).sum()
    }
}

/// `min c'y + offset  s.t.  A y = b,  F_i(y) >= 0`.
#[derive(Clone, Debug)]
pub struct SDPInstance {
    pub layout: MeasureLayout,
    pub blocks: Vec<PsdBlock>,
    pub equalities: Vec<EqualityRow>,
    pub cost: Vec<(usize, f64)>,
    /// Constant part of the cost (e.g. a terminal cost at a fixed end point).
    pub cost_offset: f64,
}

impl SDPInstance {
    pub fn nvars(&self) -> usize {
        self.layout.size
    }

    pub fn objective(&self, y: &[f64]) -> f64 {
        self.cost_offset + self.cost.iter().map(|&(i, c)| c * y[i]).sum::<f64>()
    }

    /// Largest `|a'y - b|` over the equality rows.
    pub fn equality_residual(&self, y: &[f64]) -> f64 {
        self.equalities
            .iter()
            .map(|r| (r.dot(y) - r.rhs).abs())
            .fold(0.0, f64::max)
    }

    /// Smallest eigenvalue over all PSD blocks.
    pub fn min_block_eigenvalue(&self, y: &[f64]) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.form.min_eigenvalue(y))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.form.size).collect()
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RelaxationInfo {
    pub order: u32,
    pub first_order: u32,
    /// Total number of moments, `n-bar`.
    pub moment_count: usize,
    pub measure_counts: Vec<usize>,
    pub block_sizes: Vec<usize>,
    pub equality_count: usize,
    pub inequality_count: usize,
}

/// Smallest `d` whose degree cap `2d` covers all problem data: Lagrangians,
/// dynamics (the images of degree-one test functions), constraints, integral
/// integrands and the terminal cost.
pub fn first_order(p: &SwitchedProblem) -> u32 {
    let mut deg = p.max_data_degree();
    let mut sets = vec![&p.shared_set];
    if let InitialSpec::FreeOnSet(s) = &p.boundary.initial {
        sets.push(s);
    }
    if let TerminalSpec::FreeOnSet(s) = &p.boundary.terminal {
        sets.push(s);
    }
    for s in sets {
        deg = s.polynomials().fold(deg, |d, g| d.max(g.degree()));
    }
    deg.div_ceil(2).max(1)
}
