//! Helpers shared by the integration tests: bundled problems, the solver
//! pipeline and an independent occupation-moment oracle built from simulated
//! arcs.

#![allow(dead_code)]

use std::path::PathBuf;

use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use switched_sos::extraction::{simulate_relaxed, DutySchedule, Trajectory};
use switched_sos::poly::Role;
use switched_sos::problem::{augment_ball, load_problem, scale, Scaling, SwitchedProblem};
use switched_sos::relaxation::{MeasureLayout, MeasureRole};

pub const EXAMPLES: [&str; 5] = ["chattering", "double_integrator", "lqr", "tank", "quadrotor"];

pub fn problem_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../problems").join(name)
}

pub fn load(name: &str) -> SwitchedProblem {
    load_problem(problem_path(&format!("{name}.toml"))).unwrap()
}

/// A problem as the solver sees it: scaled onto the unit box, with the
/// redundant ball constraint added.
pub struct Pipeline {
    pub original: SwitchedProblem,
    pub scaled: SwitchedProblem,
    pub scaling: Scaling,
}

pub fn pipeline(name: &str) -> Pipeline {
    let original = load(name);
    let (scaled, scaling) = scale(&original).unwrap();
    Pipeline {
        scaled: augment_ball(&scaled),
        original,
        scaling,
    }
}

fn monomial(k: &switched_sos::poly::MultiIndex, z: &[f64]) -> f64 {
    k.eval(z)
}

/// Moment vector of the occupation measures of a scaled arc: Simpson
/// quadrature of `d_j(t) z^alpha` for the modal measures, Dirac masses at the
/// ends for the boundary measures.
pub fn occupation_moments(p: &SwitchedProblem, layout: &MeasureLayout, arc: &Trajectory) -> Vec<f64> {
    let controls = p.space.indices_with(Role::Control);
    let mut y = vec![0.0; layout.size];
    for m in &layout.measures {
        let slot = &mut y[m.offset..m.offset + m.len()];
        match m.role {
            MeasureRole::Modal(j) => {
                let nsteps = arc.step_duty.len();
                let node = |k: usize, step: usize| {
                    let mut z = arc.points[k].clone();
                    for (c, &i) in controls.iter().enumerate() {
                        z[i] = arc.step_controls[step][c];
                    }
                    z
                };
                let mut k = 0;
                while k < nsteps {
                    let d = arc.step_duty[k][j];
                    let h = arc.times[k + 1] - arc.times[k];
                    // Simpson over two equal steps of one cell, else trapezoid
                    let pair = k + 1 < nsteps
                        && arc.step_duty[k + 1] == arc.step_duty[k]
                        && arc.step_controls[k + 1] == arc.step_controls[k]
                        && ((arc.times[k + 2] - arc.times[k + 1]) - h).abs() <= 1e-9 * h.abs().max(1e-300);
                    if d != 0.0 && h != 0.0 {
                        let (a, b) = (node(k, k), node(k + 1, k));
                        if pair {
                            let c = node(k + 2, k);
                            for (s, alpha) in slot.iter_mut().zip(&m.monomials) {
                                *s += d * h / 3.0 * (monomial(alpha, &a) + 4.0 * monomial(alpha, &b) + monomial(alpha, &c));
                            }
                        } else {
                            for (s, alpha) in slot.iter_mut().zip(&m.monomials) {
                                *s += 0.5 * d * h * (monomial(alpha, &a) + monomial(alpha, &b));
                            }
                        }
                    }
                    k += if pair { 2 } else { 1 };
                }
            }
            MeasureRole::Terminal => {
                let z = arc.points.last().unwrap();
                for (s, alpha) in slot.iter_mut().zip(&m.monomials) {
                    *s = monomial(alpha, z);
                }
            }
            MeasureRole::Initial => {
                for (s, alpha) in slot.iter_mut().zip(&m.monomials) {
                    *s = monomial(alpha, &arc.points[0]);
                }
            }
        }
    }
    y
}

/// True when every variable of the scaled arc stays in `[-1, 1]`.
pub fn inside_unit_box(arc: &Trajectory) -> bool {
    arc.points.iter().all(|z| z.iter().all(|v| v.abs() <= 1.0 + 1e-9))
}

fn random_duty(rng: &mut StdRng, nmodes: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..nmodes).map(|_| rng.random_range(0.0..1.0f64).powi(2)).collect();
    let s: f64 = w.iter().sum::<f64>().max(1e-12);
    w.iter().map(|v| v / s).collect()
}

/// Double integrator arc through `(1, 1) -> (0, 0)`: brake for `a`, coast
/// (equal chattering) for `b`, then a constant push that lands exactly on
/// the origin.
fn double_integrator_schedule(rng: &mut StdRng) -> DutySchedule {
    loop {
        let a: f64 = rng.random_range(1.2..2.0);
        let x1 = 1.0 + a - 0.5 * a * a;
        let v = 1.0 - a;
        // the push c = v^2 / (2 x1') must not exceed 1
        let bmax = (x1 - 0.5 * v * v) / -v;
        let b = rng.random_range(0.0..1.0) * bmax.min(2.0);
        let xb = x1 + v * b;
        let c = v * v / (2.0 * xb);
        let tau = -v / c;
        let end = a + b + tau;
        if c > 1.0 || end > 5.0 {
            continue;
        }
        let push = 0.5 * (1.0 + c);
        return DutySchedule::piecewise(
            0.0,
            &[(a, vec![1.0, 0.0]), (a + b, vec![0.5, 0.5]), (end, vec![1.0 - push, push])],
        );
    }
}

/// Random piecewise-constant schedule on the problem's fixed horizon, with
/// random controls inside `control_frac` of their bounds.
fn generic_schedule(p: &SwitchedProblem, rng: &mut StdRng, control_frac: f64) -> DutySchedule {
    let t1 = p.boundary.horizon.end();
    let ncells = rng.random_range(1..6usize);
    let mut cuts: Vec<f64> = (0..ncells - 1).map(|_| rng.random_range(0.0..t1)).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.push(t1);
    let cells: Vec<(f64, Vec<f64>)> = cuts.iter().map(|&t| (t, random_duty(rng, p.modes.len()))).collect();
    let mut sched = DutySchedule::piecewise(0.0, &cells);
    let controls = p.space.indices_with(Role::Control);
    if !controls.is_empty() {
        sched.controls = Some(
            cells
                .iter()
                .map(|_| {
                    controls
                        .iter()
                        .map(|&i| {
                            let b = p.scaling_box[i];
                            b.center() + control_frac * b.half_width() * rng.random_range(-1.0..1.0)
                        })
                        .collect()
                })
                .collect(),
        );
    }
    sched
}

/// `n` admissible simulated arcs of a bundled example, in scaled coordinates.
/// Candidates that leave the unit box are redrawn.
pub fn random_arcs(name: &str, pl: &Pipeline, n: usize, seed: u64, dt: f64) -> Vec<Trajectory> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut tries = 0;
    while out.len() < n {
        tries += 1;
        assert!(tries < 50 * n, "too few admissible arcs for {name}");
        let sched = match name {
            "double_integrator" => double_integrator_schedule(&mut rng),
            // large inputs push the LQR states out of their boxes
            "lqr" => generic_schedule(&pl.original, &mut rng, 0.05),
            _ => generic_schedule(&pl.original, &mut rng, 1.0),
        };
        let Ok(arc) = simulate_relaxed(&pl.original, &sched, dt) else {
            continue;
        };
        let scaled = arc.scaled(&pl.original, &pl.scaling);
        if arc.admissible() && inside_unit_box(&scaled) {
            out.push(scaled);
        }
    }
    out
}
