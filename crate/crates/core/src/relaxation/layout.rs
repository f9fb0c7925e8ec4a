use std::collections::HashMap;

use crate::poly::{monomials_on, MultiIndex, Polynomial};
use crate::problem::{Horizon, InitialSpec, SemialgebraicSet, SwitchedProblem, TerminalSpec};

/// What a measure of the relaxation stands for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeasureRole {
    /// Modal occupation measure of mode `j`.
    Modal(usize),
    Initial,
    Terminal,
}

impl MeasureRole {
    pub fn label(&self) -> String {
        match self {
            MeasureRole::Modal(j) => format!("mode {}", j + 1),
            MeasureRole::Initial => "initial".into(),
            MeasureRole::Terminal => "terminal".into(),
        }
    }
}

/// Rewrite rule `z^k -> replacement` taken from an equality `c z^k + r = 0`
/// with `deg r < k`. Pins `z = const` are the case `k = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub var: usize,
    pub power: u32,
    pub replacement: Polynomial,
    /// Index of the equality in the measure's support.
    pub equality: usize,
}

/// One measure of the layout: its variables, its truncated moment indices
/// (full-space multi-indices in graded-lex order) and its support.
#[derive(Clone, Debug)]
pub struct Measure {
    pub role: MeasureRole,
    pub vars: Vec<usize>,
    pub offset: usize,
    pub monomials: Vec<MultiIndex>,
    pub support: SemialgebraicSet,
    pub rules: Vec<Rule>,
    lookup: HashMap<MultiIndex, usize>,
}

impl Measure {
    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    /// Global position of the moment of `k`, if it is in the truncation.
    pub fn position(&self, k: &MultiIndex) -> Option<usize> {
        self.lookup.get(k).map(|i| self.offset + i)
    }

    /// Variables not fixed by a pin.
    pub fn free_vars(&self) -> Vec<usize> {
        self.vars
            .iter()
            .copied()
            .filter(|v| !self.rules.iter().any(|r| r.var == *v && r.power == 1))
            .collect()
    }

    /// True when no rule applies to the monomial.
    pub fn is_standard(&self, k: &MultiIndex) -> bool {
        self.rules.iter().all(|r| k.get(r.var) < r.power)
    }

    /// Monomials over the measure's variables of degree at most `deg` that no
    /// rule reduces; the basis of its moment and localizing matrices.
    pub fn basis(&self, nvars: usize, deg: u32) -> Vec<MultiIndex> {
        monomials_on(nvars, &self.vars, deg)
            .into_iter()
            .filter(|k| self.is_standard(k))
            .collect()
    }

    /// Normal form of `q` under the rules.
    pub fn reduce(&self, q: &Polynomial) -> Polynomial {
        let mut cur = q.clone();
        for _ in 0..64 {
            let mut changed = false;
            let mut next = Polynomial::zero(q.space());
            for (k, c) in cur.terms() {
                match self.rules.iter().find(|r| k.get(r.var) >= r.power) {
                    Some(r) => {
                        let rest = k.with(r.var, k.get(r.var) - r.power);
                        let term = r.replacement.shift(&rest).scale(c);
                        next = &next + &term;
                        changed = true;
                    }
                    None => next = &next + &Polynomial::monomial(q.space(), k.clone(), c),
                }
            }
            cur = next;
            if !changed {
                break;
            }
        }
        cur
    }
}

/// The measures of an order-`d` relaxation and their flat moment vector.
#[derive(Clone, Debug)]
pub struct MeasureLayout {
    pub order: u32,
    pub measures: Vec<Measure>,
    pub size: usize,
}

impl MeasureLayout {
    pub fn find(&self, role: MeasureRole) -> Option<usize> {
        self.measures.iter().position(|m| m.role == role)
    }

    pub fn modal(&self, j: usize) -> &Measure {
        &self.measures[self.find(MeasureRole::Modal(j)).expect("modal measure")]
    }

    pub fn initial(&self) -> Option<&Measure> {
        self.find(MeasureRole::Initial).map(|i| &self.measures[i])
    }

    pub fn terminal(&self) -> Option<&Measure> {
        self.find(MeasureRole::Terminal).map(|i| &self.measures[i])
    }

    /// Moment sub-vector of measure `m`.
    pub fn slice<'a>(&self, m: usize, y: &'a [f64]) -> &'a [f64] {
        let meas = &self.measures[m];
        &y[meas.offset..meas.offset + meas.len()]
    }
}

/// One modal measure per mode on `(t, x, lifts, own controls)`; an initial
/// measure unless the initial state is a fixed point; a terminal measure when
/// the terminal state or time is free. Expects a scaled problem.
pub fn build_layout(p: &SwitchedProblem, d: u32) -> MeasureLayout {
    let mut roles: Vec<MeasureRole> = (0..p.modes.len()).map(MeasureRole::Modal).collect();
    if !matches!(p.boundary.initial, InitialSpec::FixedPoint(_)) {
        roles.push(MeasureRole::Initial);
    }
    if needs_terminal_measure(p) {
        roles.push(MeasureRole::Terminal);
    }
    let nvars = p.space.len();
    let mut offset = 0;
    let mut measures = Vec::with_capacity(roles.len());
    for role in roles {
        let vars = match role {
            MeasureRole::Modal(j) => p.mode_vars(j),
            _ => p.dynamic_vars(),
        };
        let monomials = monomials_on(nvars, &vars, 2 * d);
        let lookup = monomials.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect();
        let support = support(p, role, &vars);
        let rules = rules(&support);
        let len = monomials.len();
        measures.push(Measure {
            role,
            vars,
            offset,
            monomials,
            support,
            rules,
            lookup,
        });
        offset += len;
    }
    MeasureLayout {
        order: d,
        measures,
        size: offset,
    }
}

pub fn needs_terminal_measure(p: &SwitchedProblem) -> bool {
    p.boundary.horizon.is_free() || !matches!(p.boundary.terminal, TerminalSpec::FixedPoint(_))
}

fn ball(p: &SwitchedProblem, vars: &[usize]) -> Polynomial {
    let mut g = Polynomial::constant(&p.space, vars.len() as f64);
    for &i in vars {
        g = &g - &Polynomial::var(&p.space, i).pow(2);
    }
    g
}

fn pin(p: &SwitchedProblem, var: usize, value: f64) -> Polynomial {
    &Polynomial::var(&p.space, var) - &Polynomial::constant(&p.space, value)
}

/// Support constraints of a measure. Boundary measures inherit the shared
/// constraints on `(t, x)` and a ball, and pin whatever the boundary fixes.
fn support(p: &SwitchedProblem, role: MeasureRole, vars: &[usize]) -> SemialgebraicSet {
    let mut s = SemialgebraicSet::default();
    match role {
        MeasureRole::Modal(j) => {
            s.extend_unique(&p.shared_set);
            if let Some(extra) = &p.modes[j].extra_set {
                s.extend_unique(extra);
            }
        }
        MeasureRole::Initial | MeasureRole::Terminal => {
            let t = p.time_index();
            if role == MeasureRole::Initial {
                s.equalities.push(pin(p, t, p.initial_time));
                if let InitialSpec::FreeOnSet(set) = &p.boundary.initial {
                    s.extend_unique(set);
                }
            } else {
                if let Horizon::Fixed(end) = p.boundary.horizon {
                    s.equalities.push(pin(p, t, end));
                }
                match &p.boundary.terminal {
                    TerminalSpec::FixedPoint(x) => {
                        for (&i, &v) in p.state_indices().iter().zip(x) {
                            s.equalities.push(pin(p, i, v));
                        }
                    }
                    TerminalSpec::FreeOnSet(set) => s.extend_unique(set),
                }
            }
            let inherited = SemialgebraicSet {
                inequalities: p
                    .shared_set
                    .inequalities
                    .iter()
                    .filter(|g| g.involves_only(vars))
                    .cloned()
                    .collect(),
                equalities: p
                    .shared_set
                    .equalities
                    .iter()
                    .filter(|h| h.involves_only(vars))
                    .cloned()
                    .collect(),
            };
            s.extend_unique(&inherited);
            s.extend_unique(&SemialgebraicSet {
                inequalities: vec![ball(p, vars)],
                equalities: Vec::new(),
            });
        }
    }
    s
}

/// Rewrite rules from equalities of the form `c z^k + r` with `deg r < k`, at
/// most one per variable.
fn rules(s: &SemialgebraicSet) -> Vec<Rule> {
    let mut out: Vec<Rule> = Vec::new();
    for (e, h) in s.equalities.iter().enumerate() {
        let Some((lead, c)) = h.terms().last().map(|(k, c)| (k.clone(), c)) else {
            continue;
        };
        let support: Vec<usize> = (0..lead.nvars()).filter(|&i| lead.get(i) > 0).collect();
        if support.len() != 1 {
            continue;
        }
        let var = support[0];
        let power = lead.get(var);
        let rest = &h.clone() - &Polynomial::monomial(h.space(), lead.clone(), c);
        let leading_unique = rest.degree() < power || rest.is_zero();
        if !leading_unique || rest.terms().any(|(k, _)| k.get(var) >= power) {
            continue;
        }
        if out.iter().any(|r| r.var == var || rest.degree_in(r.var) > 0) {
            continue;
        }
        if out.iter().any(|r| r.replacement.degree_in(var) > 0) {
            continue;
        }
        out.push(Rule {
            var,
            power,
            replacement: rest.scale(-1.0 / c),
            equality: e,
        });
    }
    out
}
