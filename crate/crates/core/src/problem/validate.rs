use super::model::*;
use super::{scale, ProblemError};
use crate::poly::{Polynomial, Role};

const POINT_TOL: f64 = 1e-9;

fn fail(message: impl Into<String>) -> ProblemError {
    ProblemError::Validation(message.into())
}

/// Checks dimensions, variable ownership, the scaling box and the fixed
/// boundary points. Point checks run on the scaled problem.
pub fn validate(p: &SwitchedProblem) -> Result<(), ProblemError> {
    let n = p.nstates();
    let nvars = p.space.len();
    if p.modes.is_empty() {
        return Err(fail("problem has no modes"));
    }
    if p.scaling_box.len() != nvars {
        return Err(fail(format!(
            "scaling box has {} intervals for {nvars} variables",
            p.scaling_box.len()
        )));
    }
    if !(p.boundary.horizon.end() > p.initial_time) {
        return Err(fail("time horizon must be positive"));
    }

    let shared = p.shared_vars();
    let in_vars = |q: &Polynomial, vars: &[usize], what: &str| {
        if q.involves_only(vars) {
            Ok(())
        } else {
            Err(fail(format!("{what} uses variables outside its measure: {q}")))
        }
    };
    for g in p.shared_set.polynomials() {
        in_vars(g, &shared, "shared constraint")?;
    }
    for (j, m) in p.modes.iter().enumerate() {
        if m.dynamics.len() != n {
            return Err(fail(format!(
                "mode '{}' has {} dynamics components for {n} states",
                m.name,
                m.dynamics.len()
            )));
        }
        for c in &m.controls {
            if p.space.role(c.var) != Role::Control {
                return Err(fail(format!("'{}' is not a control", p.space.name(c.var))));
            }
        }
        let vars = p.mode_vars(j);
        let what = format!("mode '{}'", m.name);
        for f in &m.dynamics {
            in_vars(f, &vars, &what)?;
        }
        in_vars(&m.lagrangian, &vars, &what)?;
        if let Some(s) = &m.extra_set {
            for g in s.polynomials() {
                in_vars(g, &vars, &what)?;
            }
        }
    }
    for ic in &p.integral_constraints {
        if ic.integrands.len() != p.modes.len() {
            return Err(fail(format!(
                "integral constraint '{}' has {} integrands for {} modes",
                ic.name,
                ic.integrands.len(),
                p.modes.len()
            )));
        }
        for (j, h) in ic.integrands.iter().enumerate() {
            in_vars(h, &p.mode_vars(j), &format!("integral constraint '{}'", ic.name))?;
        }
    }
    let dynamic = p.dynamic_vars();
    if let Some(phi) = &p.boundary.terminal_cost {
        in_vars(phi, &dynamic, "terminal cost")?;
    }
    let boundary_sets = [
        match &p.boundary.initial {
            InitialSpec::FreeOnSet(s) => Some(s),
            _ => None,
        },
        match &p.boundary.terminal {
            TerminalSpec::FreeOnSet(s) => Some(s),
            _ => None,
        },
    ];
    for s in boundary_sets.into_iter().flatten() {
        for g in s.polynomials() {
            in_vars(g, &dynamic, "boundary set")?;
        }
    }
    match &p.boundary.initial {
        InitialSpec::FixedPoint(x) if x.len() != n => {
            return Err(fail(format!("initial point has {} entries for {n} states", x.len())))
        }
        InitialSpec::Distribution(m) => {
            if let Some((k, _)) = m.iter().find(|(k, _)| k.nvars() != n) {
                return Err(fail(format!(
                    "initial moment {:?} has {} exponents for {n} states",
                    k.exponents(),
                    k.nvars()
                )));
            }
        }
        _ => {}
    }
    if let TerminalSpec::FixedPoint(x) = &p.boundary.terminal {
        if x.len() != n {
            return Err(fail(format!("terminal point has {} entries for {n} states", x.len())));
        }
    }

    let (sp, _) = scale(p)?;
    let time = p.time_index();
    let states = p.state_indices();
    let check = |label: &str, x_scaled: &[f64], t_scaled: Option<f64>| -> Result<(), ProblemError> {
        for (k, &i) in states.iter().enumerate() {
            if !Interval::unit().contains(x_scaled[k], POINT_TOL) {
                return Err(fail(format!(
                    "{label} point leaves the box of '{}'",
                    p.space.name(i)
                )));
            }
        }
        let mut vars = states.clone();
        if t_scaled.is_some() {
            vars.push(time);
        }
        let z = sp.point(t_scaled.unwrap_or(0.0), x_scaled);
        for (g, g_orig) in sp.shared_set.inequalities.iter().zip(&p.shared_set.inequalities) {
            if g.involves_only(&vars) && g.eval(&z) < -POINT_TOL {
                return Err(fail(format!("{label} point violates g: {g_orig}")));
            }
        }
        for (h, h_orig) in sp.shared_set.equalities.iter().zip(&p.shared_set.equalities) {
            if h.involves_only(&vars) && h.eval(&z).abs() > POINT_TOL {
                return Err(fail(format!("{label} point violates h: {h_orig}")));
            }
        }
        Ok(())
    };
    if let InitialSpec::FixedPoint(x) = &sp.boundary.initial {
        check("initial", x, Some(sp.initial_time))?;
    }
    if let TerminalSpec::FixedPoint(x) = &sp.boundary.terminal {
        let t = match sp.boundary.horizon {
            Horizon::Fixed(t) => Some(t),
            Horizon::Free(_) => None,
        };
        check("terminal", x, t)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use crate::problem::{parse_problem, ProblemError};

    const CHATTER: &str = r#"
[space]
time = "t"
states = [{ name = "x", box = [-1.0, 1.0] }]
[mode.down]
dynamics = ["-1"]
lagrangian = "x^2"
[mode.up]
dynamics = ["1"]
lagrangian = "x^2"
[set]
inequalities = ["1 - x^2"]
[boundary]
horizon = { fixed = 1.0 }
initial = { fixed = [0.5] }
terminal = { free = {} }
"#;

    fn message(text: &str) -> String {
        match parse_problem(text) {
            Err(ProblemError::Validation(m)) => m,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn accepts_interior_start() {
        assert!(parse_problem(CHATTER).is_ok());
    }

    #[test]
    fn rejects_start_outside_set() {
        let text = CHATTER
            .replace("fixed = [0.5]", "fixed = [2.0]")
            .replace("[-1.0, 1.0]", "[-3.0, 3.0]");
        assert_eq!(message(&text), "initial point violates g: 1 - 1*x^2");
    }

    #[test]
    fn rejects_start_outside_box() {
        let text = CHATTER.replace("fixed = [0.5]", "fixed = [2.0]");
        assert!(message(&text).contains("leaves the box"));
    }

    #[test]
    fn rejects_structural_errors() {
        let no_modes = CHATTER
            .replace("[mode.down]\ndynamics = [\"-1\"]\nlagrangian = \"x^2\"\n", "")
            .replace("[mode.up]\ndynamics = [\"1\"]\nlagrangian = \"x^2\"\n", "[mode]\n");
        assert_eq!(message(&no_modes), "problem has no modes");
        let wrong_dim = CHATTER.replace("dynamics = [\"1\"]", "dynamics = [\"1\", \"x\"]");
        assert!(message(&wrong_dim).contains("2 dynamics components"));
        let zero_width = CHATTER.replace("[-1.0, 1.0]", "[1.0, 1.0]");
        assert!(message(&zero_width).contains("degenerate"));
        let bad_horizon = CHATTER.replace("fixed = 1.0", "fixed = -1.0");
        assert!(message(&bad_horizon).contains("horizon"));
    }
}
