use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::poly::{MultiIndex, Polynomial, Role, VariableSpace};

/// Basic semialgebraic set `{ g_i >= 0, h_k = 0 }`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SemialgebraicSet {
    pub inequalities: Vec<Polynomial>,
    pub equalities: Vec<Polynomial>,
}

impl SemialgebraicSet {
    pub fn is_empty(&self) -> bool {
        self.inequalities.is_empty() && self.equalities.is_empty()
    }

    pub fn polynomials(&self) -> impl Iterator<Item = &Polynomial> {
        self.inequalities.iter().chain(&self.equalities)
    }

    /// Appends `other`, skipping polynomials already present.
    pub fn extend_unique(&mut self, other: &SemialgebraicSet) {
        for g in &other.inequalities {
            if !self.inequalities.contains(g) {
                self.inequalities.push(g.clone());
            }
        }
        for h in &other.equalities {
            if !self.equalities.contains(h) {
                self.equalities.push(h.clone());
            }
        }
    }

    pub(crate) fn map(&self, f: impl Fn(&Polynomial) -> Polynomial) -> SemialgebraicSet {
        SemialgebraicSet {
            inequalities: self.inequalities.iter().map(&f).collect(),
            equalities: self.equalities.iter().map(&f).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn unit() -> Self {
        Interval { lo: -1.0, hi: 1.0 }
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }
}

/// Continuous control owned by one mode, `u in [lo, hi]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlBound {
    pub var: usize,
    pub bounds: Interval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeSpec {
    pub name: String,
    /// One component per state variable, in space order.
    pub dynamics: Vec<Polynomial>,
    pub lagrangian: Polynomial,
    /// Mode-specific constraints, intersected with the shared set.
    pub extra_set: Option<SemialgebraicSet>,
    pub controls: Vec<ControlBound>,
}

impl ModeSpec {
    pub fn control_vars(&self) -> Vec<usize> {
        self.controls.iter().map(|c| c.var).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialSpec {
    FixedPoint(Vec<f64>),
    /// Initial state free in a set of the states (time is fixed to the start).
    FreeOnSet(SemialgebraicSet),
    /// Initial state distributed with the given moments `(state exponents, value)`.
    Distribution(Vec<(MultiIndex, f64)>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum TerminalSpec {
    FixedPoint(Vec<f64>),
    FreeOnSet(SemialgebraicSet),
}

/// End of the time window. The start is [`SwitchedProblem::initial_time`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Horizon {
    Fixed(f64),
    /// Free terminal time bounded by `t_max`.
    Free(f64),
}

impl Horizon {
    pub fn end(&self) -> f64 {
        match *self {
            Horizon::Fixed(t) | Horizon::Free(t) => t,
        }
    }

    pub fn is_free(&self) -> bool {
        matches!(self, Horizon::Free(_))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundarySpec {
    pub initial: InitialSpec,
    pub terminal: TerminalSpec,
    pub horizon: Horizon,
    /// Mayer term evaluated at the terminal time and state.
    pub terminal_cost: Option<Polynomial>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

/// `sum_j int h_j(t, x) dt  (sense)  bound`, one integrand per mode.
#[derive(Clone, Debug, PartialEq)]
pub struct IntegralConstraint {
    pub name: String,
    pub integrands: Vec<Polynomial>,
    pub bound: f64,
    pub sense: Sense,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwitchedProblem {
    pub name: String,
    pub space: Arc<VariableSpace>,
    pub modes: Vec<ModeSpec>,
    pub shared_set: SemialgebraicSet,
    pub boundary: BoundarySpec,
    pub integral_constraints: Vec<IntegralConstraint>,
    /// One interval per variable. The time entry spans the time window.
    pub scaling_box: Vec<Interval>,
    /// Start of the time window (0 for problems as written, -1 once scaled).
    pub initial_time: f64,
}

impl SwitchedProblem {
    pub fn nstates(&self) -> usize {
        self.space.nstates()
    }

    pub fn time_index(&self) -> usize {
        self.space.time_index()
    }

    pub fn state_indices(&self) -> Vec<usize> {
        self.space.state_indices()
    }

    /// Time, states and lifts: the variables every modal measure carries.
    pub fn shared_vars(&self) -> Vec<usize> {
        (0..self.space.len())
            .filter(|&i| self.space.role(i) != Role::Control)
            .collect()
    }

    /// Time and states: the arguments of test functions.
    pub fn dynamic_vars(&self) -> Vec<usize> {
        (0..self.space.len())
            .filter(|&i| matches!(self.space.role(i), Role::Time | Role::State))
            .collect()
    }

    /// Variables of the `j`-th modal measure, in space order.
    pub fn mode_vars(&self, j: usize) -> Vec<usize> {
        let own = self.modes[j].control_vars();
        (0..self.space.len())
            .filter(|&i| self.space.role(i) != Role::Control || own.contains(&i))
            .collect()
    }

    pub fn time_window(&self) -> Interval {
        Interval::new(self.initial_time, self.boundary.horizon.end())
    }

    /// Full-space point `(t, x)` with zeros in every other slot.
    pub fn point(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.space.len()];
        p[self.time_index()] = t;
        for (k, &i) in self.state_indices().iter().enumerate() {
            p[i] = x[k];
        }
        p
    }

    /// Polynomial `(z_i - lo)(hi - z_i)`, nonnegative exactly on the interval.
    pub fn interval_constraint(&self, var: usize, iv: Interval) -> Polynomial {
        let z = Polynomial::var(&self.space, var);
        let lo = Polynomial::constant(&self.space, iv.lo);
        let hi = Polynomial::constant(&self.space, iv.hi);
        &(&z - &lo) * &(&hi - &z)
    }

    pub fn max_data_degree(&self) -> u32 {
        let mut deg = 0;
        for m in &self.modes {
            deg = deg.max(m.lagrangian.degree());
            for f in &m.dynamics {
                deg = deg.max(f.degree());
            }
            if let Some(s) = &m.extra_set {
                deg = s.polynomials().fold(deg, |d, g| d.max(g.degree()));
            }
        }
        deg = self.shared_set.polynomials().fold(deg, |d, g| d.max(g.degree()));
        for ic in &self.integral_constraints {
            deg = ic.integrands.iter().fold(deg, |d, h| d.max(h.degree()));
        }
        if let Some(phi) = &self.boundary.terminal_cost {
            deg = deg.max(phi.degree());
        }
        deg
    }
}
