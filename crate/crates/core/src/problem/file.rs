//! TOML problem files.
//!
//! ```toml
//! name = "chattering"
//!
//! [space]
//! time = "t"
//! states = [{ name = "x", box = [-1.0, 1.0] }]
//! lifts = []                                  # optional algebraic variables
//!
//! [mode.down]                                 # one table per mode, in order
//! dynamics = ["-1"]                           # one expression per state
//! lagrangian = "x^2"
//! controls = [{ name = "u1", bounds = [-20.0, 20.0] }]   # optional
//! set = { inequalities = [], equalities = [] }           # optional
//!
//! [set]                                       # shared by every mode
//! inequalities = ["1 - x^2"]
//! equalities = []
//!
//! [boundary]
//! horizon = { fixed = 1.0 }                   # or { free = 5.0 } (T_max)
//! initial = { fixed = [0.5] }                 # or { free = { ... } } or
//!                                             # { distribution = [{ exponents = [2], value = 0.3 }] }
//! terminal = { free = {} }                    # or { fixed = [0.0] }
//! terminal_cost = "x^2"                       # optional
//!
//! [integral.energy]                           # optional, one table each
//! integrands = ["1", "1"]                     # one per mode
//! bound = 0.5
//! sense = "<="                                # "<=", "=" or ">="
//! ```
//!
//! The time box is not declared: it is the time window `[0, T]` or `[0, T_max]`,
//! and `t (T - t) >= 0` is added to the shared set. Control bounds are added to
//! their mode's set. State and lift boxes only fix the scaling, so constrain them
//! in `[set]` when they are part of the model.

use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use super::model::*;
use super::{validate, ProblemError};
use crate::poly::{parse_polynomial, MultiIndex, Polynomial, Role, VariableSpace};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    #[serde(default)]
    name: String,
    space: SpaceFile,
    mode: toml::Table,
    #[serde(default)]
    set: SetFile,
    boundary: BoundaryFile,
    #[serde(default)]
    integral: toml::Table,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpaceFile {
    time: String,
    states: Vec<VarFile>,
    #[serde(default)]
    lifts: Vec<VarFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VarFile {
    name: String,
    #[serde(rename = "box")]
    bounds: [f64; 2],
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SetFile {
    #[serde(default)]
    inequalities: Vec<String>,
    #[serde(default)]
    equalities: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModeFile {
    dynamics: Vec<String>,
    lagrangian: String,
    #[serde(default)]
    controls: Vec<ControlFile>,
    set: Option<SetFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControlFile {
    name: String,
    bounds: [f64; 2],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundaryFile {
    horizon: HorizonFile,
    initial: InitialFile,
    terminal: TerminalFile,
    terminal_cost: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
enum HorizonFile {
    Fixed(f64),
    Free(f64),
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
enum InitialFile {
    Fixed(Vec<f64>),
    Free(SetFile),
    Distribution(Vec<MomentFile>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MomentFile {
    exponents: Vec<u32>,
    value: f64,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
enum TerminalFile {
    Fixed(Vec<f64>),
    Free(SetFile),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntegralFile {
    integrands: Vec<String>,
    bound: f64,
    sense: Sense,
}

/// Reads, parses and validates a problem file.
pub fn load_problem(path: impl AsRef<Path>) -> Result<SwitchedProblem, ProblemError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ProblemError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut p = parse_problem(&text)?;
    if p.name.is_empty() {
        p.name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
    }
    Ok(p)
}

/// Parses and validates problem text in the TOML schema above.
pub fn parse_problem(text: &str) -> Result<SwitchedProblem, ProblemError> {
    let file: ProblemFile = toml::from_str(text).map_err(|e| ProblemError::Schema {
        path: "<document>".into(),
        message: e.to_string().trim().to_string(),
    })?;
    let problem = build(file)?;
    validate(&problem)?;
    Ok(problem)
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> ProblemError {
    ProblemError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

fn build(file: ProblemFile) -> Result<SwitchedProblem, ProblemError> {
    let mut modes_raw = Vec::new();
    for (name, value) in file.mode {
        let m: ModeFile = value
            .try_into()
            .map_err(|e: toml::de::Error| schema(format!("mode.{name}"), e.message()))?;
        modes_raw.push((name, m));
    }

    // time, states, lifts, then controls in mode order
    let mut vars: Vec<(String, Role)> = vec![(file.space.time.clone(), Role::Time)];
    let mut boxes: Vec<Option<Interval>> = vec![None];
    for v in &file.space.states {
        vars.push((v.name.clone(), Role::State));
        boxes.push(Some(Interval::new(v.bounds[0], v.bounds[1])));
    }
    for v in &file.space.lifts {
        vars.push((v.name.clone(), Role::Lift));
        boxes.push(Some(Interval::new(v.bounds[0], v.bounds[1])));
    }
    for (_, m) in &modes_raw {
        for c in &m.controls {
            vars.push((c.name.clone(), Role::Control));
            boxes.push(Some(Interval::new(c.bounds[0], c.bounds[1])));
        }
    }
    let space = Arc::new(
        VariableSpace::new(vars.iter().map(|(n, r)| (n.as_str(), *r)))
            .map_err(|e| schema("space", e.to_string()))?,
    );

    let parse = |path: &str, text: &str| -> Result<Polynomial, ProblemError> {
        parse_polynomial(text, &space).map_err(|source| ProblemError::Parse {
            path: path.to_string(),
            source,
        })
    };
    let parse_set = |path: &str, s: &SetFile| -> Result<SemialgebraicSet, ProblemError> {
        Ok(SemialgebraicSet {
            inequalities: s
                .inequalities
                .iter()
                .enumerate()
                .map(|(i, e)| parse(&format!("{path}.inequalities[{i}]"), e))
                .collect::<Result<_, _>>()?,
            equalities: s
                .equalities
                .iter()
                .enumerate()
                .map(|(i, e)| parse(&format!("{path}.equalities[{i}]"), e))
                .collect::<Result<_, _>>()?,
        })
    };

    let mut modes = Vec::new();
    for (name, m) in &modes_raw {
        let path = format!("mode.{name}");
        let dynamics = m
            .dynamics
            .iter()
            .enumerate()
            .map(|(i, e)| parse(&format!("{path}.dynamics[{i}]"), e))
            .collect::<Result<Vec<_>, _>>()?;
        let lagrangian = parse(&format!("{path}.lagrangian"), &m.lagrangian)?;
        let extra_set = m
            .set
            .as_ref()
            .map(|s| parse_set(&format!("{path}.set"), s))
            .transpose()?;
        let controls = m
            .controls
            .iter()
            .map(|c| ControlBound {
                var: space.index_of(&c.name).unwrap(),
                bounds: Interval::new(c.bounds[0], c.bounds[1]),
            })
            .collect();
        modes.push(ModeSpec {
            name: name.clone(),
            dynamics,
            lagrangian,
            extra_set,
            controls,
        });
    }

    let shared_set = parse_set("set", &file.set)?;
    let b = &file.boundary;
    let horizon = match b.horizon {
        HorizonFile::Fixed(t) => Horizon::Fixed(t),
        HorizonFile::Free(t) => Horizon::Free(t),
    };
    let initial = match &b.initial {
        InitialFile::Fixed(x) => InitialSpec::FixedPoint(x.clone()),
        InitialFile::Free(s) => InitialSpec::FreeOnSet(parse_set("boundary.initial.free", s)?),
        InitialFile::Distribution(ms) => {
            let n = space.nstates();
            let mut moments = Vec::new();
            for (i, m) in ms.iter().enumerate() {
                if m.exponents.len() != n {
                    return Err(schema(
                        format!("boundary.initial.distribution[{i}].exponents"),
                        format!("expected {n} exponents, found {}", m.exponents.len()),
                    ));
                }
                moments.push((MultiIndex::new(m.exponents.clone()), m.value));
            }
            InitialSpec::Distribution(moments)
        }
    };
    let terminal = match &b.terminal {
        TerminalFile::Fixed(x) => TerminalSpec::FixedPoint(x.clone()),
        TerminalFile::Free(s) => TerminalSpec::FreeOnSet(parse_set("boundary.terminal.free", s)?),
    };
    let terminal_cost = b
        .terminal_cost
        .as_ref()
        .map(|e| parse("boundary.terminal_cost", e))
        .transpose()?;

    let mut integral_constraints = Vec::new();
    for (name, value) in file.integral {
        let path = format!("integral.{name}");
        let ic: IntegralFile = value
            .try_into()
            .map_err(|e: toml::de::Error| schema(path.clone(), e.message()))?;
        let integrands = ic
            .integrands
            .iter()
            .enumerate()
            .map(|(i, e)| parse(&format!("{path}.integrands[{i}]"), e))
            .collect::<Result<Vec<_>, _>>()?;
        integral_constraints.push(IntegralConstraint {
            name,
            integrands,
            bound: ic.bound,
            sense: ic.sense,
        });
    }

    boxes[0] = Some(Interval::new(0.0, horizon.end()));
    let mut problem = SwitchedProblem {
        name: file.name,
        space,
        modes,
        shared_set,
        boundary: BoundarySpec {
            initial,
            terminal,
            horizon,
            terminal_cost,
        },
        integral_constraints,
        scaling_box: boxes.into_iter().map(Option::unwrap).collect(),
        initial_time: 0.0,
    };
    add_implied_constraints(&mut problem);
    Ok(problem)
}

/// Adds the time window and the control bounds as inequalities, unless the
/// file already states them.
fn add_implied_constraints(p: &mut SwitchedProblem) {
    let window = p.interval_constraint(p.time_index(), p.time_window());
    if !p.shared_set.inequalities.contains(&window) {
        p.shared_set.inequalities.insert(0, window);
    }
    for j in 0..p.modes.len() {
        let bounds: Vec<Polynomial> = p.modes[j]
            .controls
            .iter()
            .map(|c| p.interval_constraint(c.var, c.bounds))
            .collect();
        if bounds.is_empty() {
            continue;
        }
        let set = p.modes[j].extra_set.get_or_insert_with(Default::default);
        set.extend_unique(&SemialgebraicSet {
            inequalities: bounds,
            equalities: Vec::new(),
        });
    }
}
