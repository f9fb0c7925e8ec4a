use std::path::PathBuf;
use std::sync::OnceLock;

use switched_sos::certificate::{arc_residual, boundary_slack, dual_value, identity_residual, recover, Certificate};
use switched_sos::extraction::{simulate_relaxed, DutySchedule, Trajectory};
use switched_sos::poly::{lie_derivative, MultiIndex, Polynomial};
use switched_sos::problem::{load_problem, parse_problem, scale, Scaling, SwitchedProblem};
use switched_sos::relaxation::{assemble, RowKind};
use switched_sos::sdp::{solve, SDPSolution, SolverSettings};

fn problem_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../problems").join(name)
}

struct Solved {
    original: SwitchedProblem,
    scaled: SwitchedProblem,
    scaling: Scaling,
    sol: SDPSolution,
    cert: Certificate,
}

fn solved(p: SwitchedProblem, d: u32) -> Solved {
    let (scaled, scaling) = scale(&p).unwrap();
    let (inst, _) = assemble(&scaled, d).unwrap();
    let sol = solve(&inst, &SolverSettings::default()).unwrap();
    assert!(sol.status.is_optimal(), "{:?}", sol.status);
    let cert = recover(&sol, &inst, &scaled).unwrap();
    Solved {
        original: p,
        scaled,
        scaling,
        sol,
        cert,
    }
}

fn chattering(d: u32) -> &'static Solved {
    static D3: OnceLock<Solved> = OnceLock::new();
    static D5: OnceLock<Solved> = OnceLock::new();
    let cell = if d == 3 { &D3 } else { &D5 };
    cell.get_or_init(|| solved(load_problem(problem_path("chattering.toml")).unwrap(), d))
}

fn arc(s: &Solved, cells: &[(f64, Vec<f64>)]) -> Trajectory {
    let sched = DutySchedule::piecewise(0.0, cells);
    simulate_relaxed(&s.original, &sched, 1e-3).unwrap().scaled(&s.original, &s.scaling)
}

#[test]
fn chattering_order_three_identity_holds() {
    let s = chattering(3);
    let scale = s.scaled.modes.iter().map(|m| m.lagrangian.max_abs_coeff()).fold(0.0, f64::max);
    for r in &s.cert.residuals {
        assert!(*r <= 1e-6 * scale, "{:?}", s.cert.residuals);
    }
    for (_, r) in &s.cert.boundary_residuals {
        assert!(*r <= 1e-6, "{:?}", s.cert.boundary_residuals);
    }
    assert!((s.cert.dual_value - s.sol.dual_obj).abs() < 1e-8);
}

#[test]
fn chattering_order_five_certifies_the_bound() {
    let s = chattering(5);
    assert!(s.cert.residuals.iter().all(|&r| r < 1e-5), "{:?}", s.cert.residuals);
    assert!(s.cert.min_gram_eigenvalue() >= -1e-8);
    assert!((s.cert.dual_value - s.sol.primal_obj).abs() < 1e-6);
}

#[test]
fn optimal_arc_has_small_residual() {
    let s = chattering(5);
    let optimal = arc(s, &[(0.5, vec![1.0, 0.0]), (1.0, vec![0.5, 0.5])]);
    let r: f64 = arc_residual(&s.scaled, &s.cert, &optimal).unwrap().iter().sum();
    assert!(r.abs() <= 1e-3, "{r}");
}

/// Cost gap of an arc in scaled units, and its split into the running
/// residual and the boundary slack.
fn gap_split(s: &Solved, a: &Trajectory) -> (f64, f64, f64) {
    let r: f64 = arc_residual(&s.scaled, &s.cert, a).unwrap().iter().sum();
    let b = boundary_slack(&s.scaled, &s.cert, a).unwrap();
    (a.cost - s.cert.dual_value, r, b)
}

#[test]
fn suboptimal_arc_gap_splits_into_residual_and_slack() {
    // mode "down" throughout: cost 1/12 against the bound 1/24
    let s = chattering(5);
    let down = arc(s, &[(1.0, vec![1.0, 0.0])]);
    let (gap, r, b) = gap_split(s, &down);
    // scaled time doubles costs
    assert!((gap - 2.0 * (1.0 / 12.0 - 1.0 / 24.0)).abs() < 1e-4, "{gap}");
    assert!(r >= -1e-6 && b >= -1e-6, "{r} {b}");
    assert!((gap - r - b).abs() < 1e-4, "{gap} {r} {b}");
    assert_eq!(arc_residual(&s.scaled, &s.cert, &down).unwrap()[1], 0.0);

    let optimal = arc(s, &[(0.5, vec![1.0, 0.0]), (1.0, vec![0.5, 0.5])]);
    let (gap, r, b) = gap_split(s, &optimal);
    assert!(gap.abs() < 1e-3 && (gap - r - b).abs() < 1e-4, "{gap} {r} {b}");
}

#[test]
fn arc_leaving_the_set_is_rejected() {
    let s = chattering(3);
    let up = arc(s, &[(0.6, vec![0.0, 1.0]), (1.0, vec![1.0, 0.0])]);
    assert!(!up.admissible());
    assert!(arc_residual(&s.scaled, &s.cert, &up).is_err());
}

#[test]
fn zero_length_arc_has_zero_residual() {
    let s = chattering(3);
    let mut a = arc(s, &[(1.0, vec![1.0, 0.0])]);
    a.times.truncate(1);
    a.states.truncate(1);
    a.points.truncate(1);
    a.step_duty.clear();
    a.step_controls.clear();
    assert_eq!(arc_residual(&s.scaled, &s.cert, &a).unwrap(), vec![0.0, 0.0]);
}

#[test]
fn residual_is_lipschitz_in_the_multipliers() {
    let s = chattering(3);
    let eps = 1e-3;
    let base = identity_residual(&s.scaled, &s.cert).unwrap();
    for alpha in [MultiIndex::new(vec![1, 0]), MultiIndex::new(vec![1, 2]), MultiIndex::new(vec![0, 3])] {
        let mut c = s.cert.clone();
        let bump = Polynomial::monomial(&s.scaled.space, alpha.clone(), eps);
        c.v = &c.v + &bump;
        let moved = identity_residual(&s.scaled, &c).unwrap();
        for (j, m) in s.scaled.modes.iter().enumerate() {
            let unit = Polynomial::monomial(&s.scaled.space, alpha.clone(), 1.0);
            let norm = lie_derivative(&unit, &m.dynamics).unwrap().max_abs_coeff();
            assert!((moved[j] - base[j]).abs() <= eps * (1.0 + norm) + 1e-15);
        }
    }
}

#[test]
fn constant_shift_changes_nothing_with_fixed_ends() {
    let text = std::fs::read_to_string(problem_path("chattering.toml"))
        .unwrap()
        .replace("terminal = { free = {} }", "terminal = { fixed = [0.0] }");
    let s = solved(parse_problem(&text).unwrap(), 2);
    assert!(s.cert.normalization.is_empty());
    let mut c = s.cert.clone();
    c.v = &c.v + &Polynomial::constant(&s.scaled.space, 3.5);
    let before = identity_residual(&s.scaled, &s.cert).unwrap();
    let after = identity_residual(&s.scaled, &c).unwrap();
    for (a, b) in before.iter().zip(&after) {
        assert!((a - b).abs() < 1e-14);
    }
    let dv = dual_value(&s.scaled, &c).unwrap();
    assert!((dv - s.cert.dual_value).abs() < 1e-12);
}

#[test]
fn test_monomials_with_rows_define_v() {
    let s = chattering(3);
    let (inst, _) = assemble(&s.scaled, 3).unwrap();
    let rows = inst.equalities.iter().filter(|r| matches!(r.kind, RowKind::Dynamics(_))).count();
    assert!(s.cert.v.nterms() <= rows);
    assert!(s.cert.v.degree() <= 6);
}
