mod common;

use std::sync::Arc;

use common::{load, pipeline, EXAMPLES};
use proptest::prelude::*;
use switched_sos::extraction::{simulate_relaxed, DutySchedule};
use switched_sos::poly::{binomial, lie_derivative, monomials_of_degree, monomials_up_to, parse_polynomial, MultiIndex, Polynomial, VariableSpace};
use switched_sos::problem::{scale, unscale, validate, Interval, SwitchedProblem};
use switched_sos::relaxation::{assemble, RowKind};
use switched_sos::sdp::{read_sdpa, solve, to_sdpa, write_sdpa, SolverSettings};

fn space(n: usize) -> Arc<VariableSpace> {
    let names: Vec<String> = (1..n).map(|i| format!("x{i}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    Arc::new(VariableSpace::time_states("t", &refs))
}

/// Random polynomial over `n` variables, degree at most `deg`.
fn poly(n: usize, deg: u32) -> impl Strategy<Value = Polynomial> {
    let coeff = prop_oneof![
        (-50i32..50).prop_map(f64::from),
        -1e3f64..1e3,
        (-1e-7f64..1e-7).prop_filter("nonzero", |c| *c != 0.0),
    ];
    let exps = proptest::collection::vec(0u32..=deg, n)
        .prop_map(move |mut e| {
            // clip onto the degree budget
            let mut left = deg;
            for v in &mut e {
                *v = (*v).min(left);
                left -= *v;
            }
            e
        });
    proptest::collection::vec((exps, coeff), 0..8).prop_map(move |terms| {
        let s = space(n);
        terms
            .into_iter()
            .fold(Polynomial::zero(&s), |acc, (e, c)| &acc + &Polynomial::monomial(&s, MultiIndex::new(e), c))
    })
}

fn close(a: &Polynomial, b: &Polynomial, tol: f64) -> bool {
    let d = a - b;
    let scale = a.max_abs_coeff().max(b.max_abs_coeff()).max(1.0);
    d.max_abs_coeff() <= tol * scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn printing_then_parsing_is_exact((n, p) in (2usize..=6).prop_flat_map(|n| (Just(n), poly(n, 8)))) {
        let back = parse_polynomial(&p.to_string(), &space(n)).unwrap();
        prop_assert_eq!(back.term_map(), p.term_map());
    }

    #[test]
    fn lie_derivative_obeys_leibniz(
        (p, q, f) in (poly(3, 3), poly(3, 3), proptest::collection::vec(poly(3, 2), 2))
    ) {
        let lhs = lie_derivative(&(&p * &q), &f).unwrap();
        let rhs = &(&p * &lie_derivative(&q, &f).unwrap()) + &(&q * &lie_derivative(&p, &f).unwrap());
        prop_assert!(close(&lhs, &rhs, 1e-9));
    }

    #[test]
    fn lie_derivative_is_the_derivative_along_the_flow(
        v in poly(3, 4),
        f in proptest::collection::vec(poly(3, 2), 2),
        z in proptest::collection::vec(-1.0f64..1.0, 3),
    ) {
        // d/ds v(t + s, x + s f(t, x)) at s = 0
        let fz: Vec<f64> = f.iter().map(|fi| fi.eval(&z)).collect();
        let at = |s: f64| {
            let w = [z[0] + s, z[1] + s * fz[0], z[2] + s * fz[1]];
            v.eval(&w)
        };
        let h = 1e-4;
        let fd = (at(h) - at(-h)) / (2.0 * h);
        let exact = lie_derivative(&v, &f).unwrap().eval(&z);
        let scale = v.max_abs_coeff() * (1.0 + fz.iter().map(|x| x.abs()).sum::<f64>()).powi(4);
        prop_assert!((fd - exact).abs() <= 1e-5 * scale.max(1.0), "{} vs {}", fd, exact);
    }

    #[test]
    fn monomials_are_graded_lex_and_concatenate(n in 1usize..=6, d in 0u32..=6) {
        let all = monomials_up_to(n, d);
        prop_assert_eq!(all.len(), binomial(n + d as usize, n));
        prop_assert!(all[0].is_zero());
        prop_assert!(all.windows(2).all(|w| w[0] < w[1]));
        let joined: Vec<MultiIndex> = (0..=d).flat_map(|k| monomials_of_degree(n, k)).collect();
        prop_assert_eq!(joined, all);
    }

    #[test]
    fn scaling_is_inverted_by_unscaling(
        lo in proptest::collection::vec(-5.0f64..0.5, 2),
        width in proptest::collection::vec(0.1f64..10.0, 2),
        t_hi in 3.6f64..8.0,
    ) {
        let mut p = load("double_integrator");
        for (k, &i) in p.state_indices().iter().enumerate() {
            p.scaling_box[i] = Interval::new(lo[k], lo[k] + width[k]);
        }
        let t = p.time_index();
        p.scaling_box[t] = Interval::new(0.0, t_hi);
        let (scaled, s) = scale(&p).unwrap();
        let back = unscale(&scaled, &s).unwrap();
        for (a, b) in p.modes.iter().zip(&back.modes) {
            prop_assert!(close(&a.lagrangian, &b.lagrangian, 1e-12));
            for (fa, fb) in a.dynamics.iter().zip(&b.dynamics) {
                prop_assert!(close(fa, fb, 1e-12));
            }
        }
        for (a, b) in p.shared_set.polynomials().zip(back.shared_set.polynomials()) {
            prop_assert!(close(a, b, 1e-12));
        }
        prop_assert!((back.initial_time - p.initial_time).abs() <= 1e-12);
    }
}

#[test]
fn bundled_problems_validate() {
    for name in EXAMPLES {
        validate(&load(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

fn scaled_schedule(p: &SwitchedProblem, name: &str) -> (DutySchedule, DutySchedule) {
    let cells = match name {
        "double_integrator" => vec![(2.0, vec![1.0, 0.0]), (2.5, vec![0.5, 0.5]), (3.5, vec![0.0, 1.0])],
        _ => {
            let t1 = p.boundary.horizon.end();
            let m = p.modes.len();
            vec![(0.4 * t1, vec![1.0 / m as f64; m]), (t1, (0..m).map(|j| if j == 0 { 1.0 } else { 0.0 }).collect())]
        }
    };
    let (_, s) = scale(p).unwrap();
    let scaled: Vec<_> = cells.iter().map(|(t, d)| (s.time_to_scaled(*t), d.clone())).collect();
    (DutySchedule::piecewise(0.0, &cells), DutySchedule::piecewise(-1.0, &scaled))
}

#[test]
fn scaled_cost_is_original_cost_times_the_time_factor() {
    for name in ["chattering", "double_integrator", "lqr", "tank"] {
        let p = load(name);
        let (scaled, s) = scale(&p).unwrap();
        let (orig, sc) = scaled_schedule(&p, name);
        let a = simulate_relaxed(&p, &orig, 1e-3).unwrap();
        let b = simulate_relaxed(&scaled, &sc, 1e-3 * s.time_factor()).unwrap();
        assert!(
            (b.cost - a.cost * s.time_factor()).abs() <= 1e-8 * (1.0 + b.cost.abs()),
            "{name}: {} vs {}",
            b.cost,
            a.cost * s.time_factor()
        );
    }
}

#[test]
fn moment_counts_match_the_binomial_formula() {
    let expect = [
        ("chattering", [18, 45, 84, 135, 198]),
        ("double_integrator", [30, 105, 252, 495, 858]),
    ];
    for (name, counts) in expect {
        let pl = pipeline(name);
        for (d, &n) in (1..=5).zip(&counts) {
            let (inst, info) = assemble(&pl.scaled, d).unwrap();
            assert_eq!(info.moment_count, n, "{name} d = {d}");
            assert_eq!(inst.nvars(), n);
        }
    }
}

#[test]
fn test_functions_of_order_d_are_kept_at_order_d_plus_one() {
    for name in ["chattering", "double_integrator", "tank"] {
        let pl = pipeline(name);
        let tests = |d| -> Vec<MultiIndex> {
            let (inst, _) = assemble(&pl.scaled, d).unwrap();
            inst.equalities
                .iter()
                .filter_map(|r| match &r.kind {
                    RowKind::Dynamics(a) => Some(a.clone()),
                    _ => None,
                })
                .collect()
        };
        for d in 1..3 {
            let (lo, hi) = (tests(d), tests(d + 1));
            assert!(lo.len() < hi.len());
            assert!(lo.iter().all(|a| hi.contains(a)), "{name} d = {d}");
        }
    }
}

#[test]
fn sdpa_files_round_trip() {
    for (name, d) in [("chattering", 3), ("double_integrator", 2), ("tank", 2)] {
        let pl = pipeline(name);
        let (inst, _) = assemble(&pl.scaled, d).unwrap();
        let sdpa = to_sdpa(&inst);
        let mut buf = Vec::new();
        write_sdpa(&sdpa, &mut buf).unwrap();
        let back = read_sdpa(buf.as_slice()).unwrap();
        assert_eq!(back.nvars, sdpa.nvars);
        assert_eq!(back.block_struct, sdpa.block_struct);
        assert_eq!(back.c, sdpa.c);
        assert_eq!(back.entries, sdpa.entries);
    }
}

#[test]
fn solves_are_deterministic_and_weakly_dual() {
    let pl = pipeline("chattering");
    let (inst, _) = assemble(&pl.scaled, 3).unwrap();
    let a = solve(&inst, &SolverSettings::default()).unwrap();
    let b = solve(&inst, &SolverSettings::default()).unwrap();
    assert_eq!(a.y, b.y);
    assert_eq!(a.z, b.z);
    assert!(a.status.is_optimal());
    let scale = 1.0 + a.primal_obj.abs();
    assert!(a.primal_obj >= a.dual_obj - 1e-8 * scale);
    // any feasible moment vector costs at least the dual value
    for arc in common::random_arcs("chattering", &pl, 5, 11, 1e-3) {
        let y = common::occupation_moments(&pl.scaled, &inst.layout, &arc);
        assert!(inst.objective(&y) >= a.dual_obj - 1e-6);
    }
}
