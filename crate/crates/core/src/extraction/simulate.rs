use nalgebra::{DMatrix, DVector};

use crate::poly::{Polynomial, Role};
use crate::problem::{Horizon, InitialSpec, Scaling, SwitchedProblem};
use crate::{Error, Result};

/// Piecewise-constant duty cycles (and optionally mode controls) on cells
/// `[bounds[i], bounds[i + 1]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DutySchedule {
    pub bounds: Vec<f64>,
    /// `duty[i][j]`, one row per cell summing to one.
    pub duty: Vec<Vec<f64>>,
    /// Values of every control variable (space order) per cell. Missing
    /// controls sit at the center of their bounds.
    pub controls: Option<Vec<Vec<f64>>>,
}

impl DutySchedule {
    /// Cells given by `(end time, duty row)` starting at `t0`.
    pub fn piecewise(t0: f64, cells: &[(f64, Vec<f64>)]) -> Self {
        let mut bounds = vec![t0];
        bounds.extend(cells.iter().map(|c| c.0));
        DutySchedule {
            bounds,
            duty: cells.iter().map(|c| c.1.clone()).collect(),
            controls: None,
        }
    }

    fn check(&self, nmodes: usize) -> Result<()> {
        if self.bounds.len() != self.duty.len() + 1 || self.duty.is_empty() {
            return Err(Error::Extraction("schedule needs one duty row per cell".into()));
        }
        if self.bounds.windows(2).any(|w| !(w[1] >= w[0])) {
            return Err(Error::Extraction("schedule cell bounds must be nondecreasing".into()));
        }
        for (i, row) in self.duty.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.len() != nmodes || (sum - 1.0).abs() > 1e-6 || row.iter().any(|&d| !(-1e-9..=1.0 + 1e-9).contains(&d)) {
                return Err(Error::Extraction(format!(
                    "duty cycles of cell {i} are not a convex combination of {nmodes} modes: {row:?}"
                )));
            }
        }
        if let Some(c) = &self.controls {
            if c.len() != self.duty.len() {
                return Err(Error::Extraction("schedule needs one control row per cell".into()));
            }
        }
        Ok(())
    }
}

/// Forward simulation of a relaxed arc.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// State at each time.
    pub states: Vec<Vec<f64>>,
    /// Full variable vector (time, states, lifts, controls) at each time.
    pub points: Vec<Vec<f64>>,
    /// Duty cycles on `[times[k], times[k + 1]]`.
    pub step_duty: Vec<Vec<f64>>,
    /// Control values (all control variables, space order) on each step.
    pub step_controls: Vec<Vec<f64>>,
    pub running_cost: f64,
    pub terminal_cost: f64,
    pub cost: f64,
    /// Largest violation of the shared constraints along the arc.
    pub max_violation: f64,
}

impl Trajectory {
    /// True when the arc respects the shared set to `1e-6`.
    pub fn admissible(&self) -> bool {
        self.max_violation <= 1e-6
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has a node")
    }

    /// The same arc in scaled coordinates.
    pub fn scaled(&self, p: &SwitchedProblem, s: &Scaling) -> Trajectory {
        let states = p.state_indices();
        let conv = |pt: &Vec<f64>| pt.iter().enumerate().map(|(i, &v)| s.to_scaled(i, v)).collect();
        let controls = control_vars(p);
        Trajectory {
            times: self.times.iter().map(|&t| s.time_to_scaled(t)).collect(),
            states: self
                .states
                .iter()
                .map(|x| x.iter().zip(&states).map(|(&v, &i)| s.to_scaled(i, v)).collect())
                .collect(),
            points: self.points.iter().map(conv).collect(),
            step_duty: self.step_duty.clone(),
            step_controls: self
                .step_controls
                .iter()
                .map(|u| u.iter().zip(&controls).map(|(&v, &i)| s.to_scaled(i, v)).collect())
                .collect(),
            running_cost: s.cost_to_scaled(self.running_cost),
            terminal_cost: s.cost_to_scaled(self.terminal_cost),
            cost: s.cost_to_scaled(self.cost),
            max_violation: self.max_violation,
        }
    }
}

fn control_vars(p: &SwitchedProblem) -> Vec<usize> {
    p.space.indices_with(Role::Control)
}

/// Solves the shared equalities that involve lifts for the lift values at a
/// given `(t, x)`, by Gauss-Newton from `guess`, preferring a solution that
/// also satisfies the inequalities on the lifts.
struct LiftSolver {
    lifts: Vec<usize>,
    eqs: Vec<Polynomial>,
    jac: Vec<Vec<Polynomial>>,
    ineqs: Vec<Polynomial>,
}

impl LiftSolver {
    fn new(p: &SwitchedProblem) -> Self {
        let lifts = p.space.indices_with(Role::Lift);
        let touches = |g: &Polynomial| g.variables().iter().any(|v| lifts.contains(v));
        let eqs: Vec<Polynomial> = p.shared_set.equalities.iter().filter(|h| touches(h)).cloned().collect();
        let jac = eqs.iter().map(|h| lifts.iter().map(|&l| h.derivative(l)).collect()).collect();
        let ineqs = p.shared_set.inequalities.iter().filter(|g| touches(g)).cloned().collect();
        LiftSolver { lifts, eqs, jac, ineqs }
    }

    fn newton(&self, z: &mut [f64]) -> bool {
        let nl = self.lifts.len();
        for _ in 0..60 {
            let r = DVector::from_iterator(self.eqs.len(), self.eqs.iter().map(|h| h.eval(z)));
            if r.amax() < 1e-13 {
                return true;
            }
            let mut j = DMatrix::zeros(self.eqs.len(), nl);
            for (a, row) in self.jac.iter().enumerate() {
                for (b, d) in row.iter().enumerate() {
                    j[(a, b)] = d.eval(z);
                }
            }
            let jt = j.transpose();
            let Some(step) = (&jt * &j + DMatrix::identity(nl, nl) * 1e-14).lu().solve(&(&jt * &r)) else {
                return false;
            };
            for (b, &l) in self.lifts.iter().enumerate() {
                z[l] -= step[b];
            }
        }
        self.eqs.iter().all(|h| h.eval(z).abs() < 1e-9)
    }

    fn fill(&self, z: &mut [f64], guess: &[f64]) -> Result<()> {
        if self.lifts.is_empty() {
            return Ok(());
        }
        let starts = [guess.to_vec(), vec![1.0; self.lifts.len()], vec![-1.0; self.lifts.len()]];
        for s in &starts {
            for (&l, &v) in self.lifts.iter().zip(s) {
                z[l] = v;
            }
            if self.newton(z) && self.ineqs.iter().all(|g| g.eval(z) >= -1e-9) {
                return Ok(());
            }
        }
        Err(Error::Extraction(format!(
            "no admissible lift values at t = {}",
            z[0]
        )))
    }
}

struct Model<'a> {
    p: &'a SwitchedProblem,
    lifts: LiftSolver,
    states: Vec<usize>,
    controls: Vec<usize>,
    last_lifts: std::cell::RefCell<Vec<f64>>,
}

impl Model<'_> {
    fn point(&self, t: f64, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.p.point(t, x);
        for (&i, &v) in self.controls.iter().zip(u) {
            z[i] = v;
        }
        let guess = self.last_lifts.borrow().clone();
        self.lifts.fill(&mut z, &guess)?;
        *self.last_lifts.borrow_mut() = self.lifts.lifts.iter().map(|&l| z[l]).collect();
        Ok(z)
    }

    /// `(x', running cost rate)` of the mixture.
    fn rhs(&self, t: f64, x: &[f64], duty: &[f64], u: &[f64]) -> Result<(Vec<f64>, f64)> {
        let z = self.point(t, x, u)?;
        let mut dx = vec![0.0; x.len()];
        let mut dc = 0.0;
        for (m, &d) in self.p.modes.iter().zip(duty) {
            if d == 0.0 {
                continue;
            }
            for (k, f) in m.dynamics.iter().enumerate() {
                dx[k] += d * f.eval(&z);
            }
            dc += d * m.lagrangian.eval(&z);
        }
        Ok((dx, dc))
    }

    fn violation(&self, z: &[f64]) -> f64 {
        let s = &self.p.shared_set;
        let g = s.inequalities.iter().map(|g| (-g.eval(z)).max(0.0));
        let h = s.equalities.iter().map(|h| h.eval(z).abs());
        g.chain(h).fold(0.0, f64::max)
    }
}

/// RK4 integration of `x' = sum_j d_j(t) f_j(t, x)` with running cost
/// `sum_j d_j l_j` integrated alongside, cell by cell with steps of at most
/// `dt`. Starts from the fixed initial point at the problem's initial time
/// and ends at the last cell bound, where the terminal cost is added.
pub fn simulate_relaxed(p: &SwitchedProblem, schedule: &DutySchedule, dt: f64) -> Result<Trajectory> {
    let InitialSpec::FixedPoint(x0) = &p.boundary.initial else {
        return Err(Error::Extraction("simulation needs a fixed initial state".into()));
    };
    if !(dt > 0.0) {
        return Err(Error::Extraction(format!("invalid time step {dt}")));
    }
    schedule.check(p.modes.len())?;
    let t0 = p.initial_time;
    let span = (p.boundary.horizon.end() - t0).abs().max(1.0);
    if (schedule.bounds[0] - t0).abs() > 1e-9 * span {
        return Err(Error::Extraction(format!(
            "schedule starts at {} instead of {t0}",
            schedule.bounds[0]
        )));
    }
    let t_end = *schedule.bounds.last().expect("checked");
    match p.boundary.horizon {
        Horizon::Fixed(t) if (t_end - t).abs() > 1e-9 * span => {
            return Err(Error::Extraction(format!("schedule ends at {t_end}, horizon is {t}")));
        }
        Horizon::Free(tmax) if t_end > tmax + 1e-9 * span => {
            return Err(Error::Extraction(format!("schedule ends at {t_end}, beyond {tmax}")));
        }
        _ => {}
    }
    let controls = control_vars(p);
    let default_u: Vec<f64> = controls.iter().map(|&i| p.scaling_box[i].center()).collect();
    let model = Model {
        p,
        lifts: LiftSolver::new(p),
        states: p.state_indices(),
        controls: controls.clone(),
        last_lifts: std::cell::RefCell::new(vec![1.0; p.space.indices_with(Role::Lift).len()]),
    };
    let boxes: Vec<_> = model.states.iter().map(|&i| p.scaling_box[i]).collect();

    let mut x = x0.clone();
    let mut t = t0;
    let mut cost = 0.0;
    let first_u = schedule.controls.as_ref().map_or(default_u.clone(), |c| c[0].clone());
    let z0 = model.point(t, &x, &first_u)?;
    let mut traj = Trajectory {
        times: vec![t],
        states: vec![x.clone()],
        max_violation: model.violation(&z0),
        points: vec![z0],
        step_duty: Vec::new(),
        step_controls: Vec::new(),
        running_cost: 0.0,
        terminal_cost: 0.0,
        cost: 0.0,
    };
    for (i, duty) in schedule.duty.iter().enumerate() {
        let u = schedule.controls.as_ref().map_or(default_u.clone(), |c| c[i].clone());
        let len = schedule.bounds[i + 1] - schedule.bounds[i];
        if len <= 0.0 {
            continue;
        }
        let nsteps = (len / dt - 1e-9).ceil().max(1.0) as usize;
        let h = len / nsteps as f64;
        for s in 0..nsteps {
            let ts = schedule.bounds[i] + h * s as f64;
            let (k1, c1) = model.rhs(ts, &x, duty, &u)?;
            let x2: Vec<f64> = x.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b).collect();
            let (k2, c2) = model.rhs(ts + 0.5 * h, &x2, duty, &u)?;
            let x3: Vec<f64> = x.iter().zip(&k2).map(|(a, b)| a + 0.5 * h * b).collect();
            let (k3, c3) = model.rhs(ts + 0.5 * h, &x3, duty, &u)?;
            let x4: Vec<f64> = x.iter().zip(&k3).map(|(a, b)| a + h * b).collect();
            let (k4, c4) = model.rhs(ts + h, &x4, duty, &u)?;
            for k in 0..x.len() {
                x[k] += h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
            }
            cost += h / 6.0 * (c1 + 2.0 * c2 + 2.0 * c3 + c4);
            t = if s + 1 == nsteps { schedule.bounds[i + 1] } else { ts + h };
            for (k, b) in boxes.iter().enumerate() {
                let slack = 0.1 * b.width();
                if !x[k].is_finite() || x[k] < b.lo - slack || x[k] > b.hi + slack {
                    return Err(Error::Extraction(format!(
                        "simulation blew up at t = {t}: state {} = {} leaves its box [{}, {}] by more than 10%",
                        p.space.name(model.states[k]),
                        x[k],
                        b.lo,
                        b.hi
                    )));
                }
            }
            let z = model.point(t, &x, &u)?;
            traj.max_violation = traj.max_violation.max(model.violation(&z));
            traj.times.push(t);
            traj.states.push(x.clone());
            traj.points.push(z);
            traj.step_duty.push(duty.clone());
            traj.step_controls.push(u.clone());
        }
    }
    traj.running_cost = cost;
    if let Some(phi) = &p.boundary.terminal_cost {
        traj.terminal_cost = phi.eval(traj.points.last().expect("nonempty"));
    }
    traj.cost = traj.running_cost + traj.terminal_cost;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::parse_problem;

    const DECAY: &str = r#"
[space]
time = "t"
states = [{ name = "x", box = [-1.0, 1.0] }]
[mode.down]
dynamics = ["-x"]
lagrangian = "x^2"
[mode.up]
dynamics = ["x"]
lagrangian = "x^2"
[set]
inequalities = ["1 - x^2"]
[boundary]
horizon = { fixed = 1.0 }
initial = { fixed = [0.5] }
terminal = { free = {} }
"#;

    #[test]
    fn mode_one_only_decay_cost() {
        let p = parse_problem(DECAY).unwrap();
        let s = DutySchedule::piecewise(0.0, &[(1.0, vec![1.0, 0.0])]);
        let tr = simulate_relaxed(&p, &s, 1e-3).unwrap();
        let exact = (1.0 - (-2.0f64).exp()) / 8.0;
        assert!((tr.cost - exact).abs() < 1e-10, "{}", tr.cost);
        assert!((tr.final_state()[0] - 0.5 * (-1.0f64).exp()).abs() < 1e-12);
        assert!(tr.admissible());
    }

    #[test]
    fn leaving_the_box_is_a_blow_up() {
        let p = parse_problem(DECAY).unwrap();
        let s = DutySchedule::piecewise(0.0, &[(1.0, vec![0.0, 1.0])]);
        // 0.5 e^1 = 1.36 exceeds 1 + 10% of the width 2
        assert!(simulate_relaxed(&p, &s, 1e-2).is_err());
    }

    #[test]
    fn schedule_is_checked() {
        let p = parse_problem(DECAY).unwrap();
        let bad = DutySchedule::piecewise(0.0, &[(1.0, vec![0.7, 0.7])]);
        assert!(simulate_relaxed(&p, &bad, 1e-2).is_err());
        let short = DutySchedule::piecewise(0.0, &[(0.5, vec![1.0, 0.0])]);
        assert!(simulate_relaxed(&p, &short, 1e-2).is_err());
    }

    #[test]
    fn lifts_follow_the_states() {
        let p = parse_problem(
            r#"
[space]
time = "t"
states = [{ name = "x", box = [0.0, 4.0] }]
lifts = [{ name = "l", box = [0.0, 2.0] }]
[mode.a]
dynamics = ["-l"]
lagrangian = "l"
[set]
inequalities = ["l"]
equalities = ["l^2 - x"]
[boundary]
horizon = { fixed = 1.0 }
initial = { fixed = [1.0] }
terminal = { free = {} }
"#,
        )
        .unwrap();
        let s = DutySchedule::piecewise(0.0, &[(1.0, vec![1.0])]);
        let tr = simulate_relaxed(&p, &s, 1e-3).unwrap();
        // x' = -sqrt(x), x(0) = 1: sqrt(x) = 1 - t/2, x(1) = 1/4
        assert!((tr.final_state()[0] - 0.25).abs() < 1e-9);
        let l = tr.points.last().unwrap()[2];
        assert!((l - 0.5).abs() < 1e-9);
        // running cost int (1 - t/2) dt = 3/4
        assert!((tr.cost - 0.75).abs() < 1e-9);
    }
}
