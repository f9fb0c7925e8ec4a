use std::collections::HashMap;

use super::model::*;
use super::ProblemError;
use crate::poly::{MultiIndex, Polynomial};

/// Affine change of coordinates `z = center + half_width * z_scaled`, one
/// entry per variable of the space.
#[derive(Clone, Debug, PartialEq)]
pub struct Scaling {
    pub center: Vec<f64>,
    pub half_width: Vec<f64>,
    time: usize,
}

impl Scaling {
    pub fn identity(nvars: usize, time: usize) -> Self {
        Scaling {
            center: vec![0.0; nvars],
            half_width: vec![1.0; nvars],
            time,
        }
    }

    /// Scaled cost divided by original cost: `1 / half_width(t)`.
    pub fn time_factor(&self) -> f64 {
        1.0 / self.half_width[self.time]
    }

    pub fn to_scaled(&self, var: usize, v: f64) -> f64 {
        (v - self.center[var]) / self.half_width[var]
    }

    pub fn from_scaled(&self, var: usize, v: f64) -> f64 {
        self.center[var] + self.half_width[var] * v
    }

    pub fn time_to_original(&self, t: f64) -> f64 {
        self.from_scaled(self.time, t)
    }

    pub fn time_to_scaled(&self, t: f64) -> f64 {
        self.to_scaled(self.time, t)
    }

    /// Cost (or any time integral) in original units.
    pub fn cost_to_original(&self, scaled: f64) -> f64 {
        scaled / self.time_factor()
    }

    pub fn cost_to_scaled(&self, original: f64) -> f64 {
        original * self.time_factor()
    }
}

/// Maps every variable affinely onto `[-1, 1]`.
///
/// Dynamics pick up the factor `h_t / h_i`, and every time integral (running
/// cost, integral constraints) and the terminal cost are divided by `h_t`, so
/// the scaled cost is the original cost times [`Scaling::time_factor`].
pub fn scale(p: &SwitchedProblem) -> Result<(SwitchedProblem, Scaling), ProblemError> {
    let mut center = Vec::with_capacity(p.scaling_box.len());
    let mut half_width = Vec::with_capacity(p.scaling_box.len());
    for (i, iv) in p.scaling_box.iter().enumerate() {
        if !(iv.lo.is_finite() && iv.hi.is_finite()) {
            return Err(ProblemError::Validation(format!(
                "unbounded scaling box for '{}'",
                p.space.name(i)
            )));
        }
        if iv.hi <= iv.lo {
            return Err(ProblemError::Validation(format!(
                "degenerate scaling interval [{}, {}] for '{}'",
                iv.lo,
                iv.hi,
                p.space.name(i)
            )));
        }
        center.push(iv.center());
        half_width.push(iv.half_width());
    }
    let s = Scaling {
        center,
        half_width,
        time: p.time_index(),
    };
    let scaled = transform(p, &s.center, &s.half_width)?;
    Ok((scaled, s))
}

/// Inverse of [`scale`].
pub fn unscale(p: &SwitchedProblem, s: &Scaling) -> Result<SwitchedProblem, ProblemError> {
    let offset: Vec<f64> = s.center.iter().zip(&s.half_width).map(|(c, h)| -c / h).collect();
    let factor: Vec<f64> = s.half_width.iter().map(|h| 1.0 / h).collect();
    transform(p, &offset, &factor)
}

/// Change of variables `z_old = a + b * z_new` applied to the whole problem.
fn transform(p: &SwitchedProblem, a: &[f64], b: &[f64]) -> Result<SwitchedProblem, ProblemError> {
    let space = &p.space;
    let n = space.len();
    let t = p.time_index();
    let states = p.state_indices();
    let images: Vec<Polynomial> = (0..n)
        .map(|i| &Polynomial::constant(space, a[i]) + &Polynomial::var(space, i).scale(b[i]))
        .collect();
    let sub = |q: &Polynomial| q.compose(&images).expect("same space");
    let to_new = |i: usize, v: f64| (v - a[i]) / b[i];
    let map_point = |x: &[f64]| -> Vec<f64> {
        states.iter().zip(x).map(|(&i, &v)| to_new(i, v)).collect()
    };

    let modes = p
        .modes
        .iter()
        .map(|m| ModeSpec {
            name: m.name.clone(),
            dynamics: m
                .dynamics
                .iter()
                .zip(&states)
                .map(|(f, &i)| sub(f).scale(b[t] / b[i]))
                .collect(),
            lagrangian: sub(&m.lagrangian),
            extra_set: m.extra_set.as_ref().map(|s| s.map(sub)),
            controls: m
                .controls
                .iter()
                .map(|c| ControlBound {
                    var: c.var,
                    bounds: Interval::new(to_new(c.var, c.bounds.lo), to_new(c.var, c.bounds.hi)),
                })
                .collect(),
        })
        .collect();

    let b_old = &p.boundary;
    let initial = match &b_old.initial {
        InitialSpec::FixedPoint(x) => InitialSpec::FixedPoint(map_point(x)),
        InitialSpec::FreeOnSet(s) => InitialSpec::FreeOnSet(s.map(sub)),
        InitialSpec::Distribution(m) => InitialSpec::Distribution(transform_moments(p, m, a, b)?),
    };
    let terminal = match &b_old.terminal {
        TerminalSpec::FixedPoint(x) => TerminalSpec::FixedPoint(map_point(x)),
        TerminalSpec::FreeOnSet(s) => TerminalSpec::FreeOnSet(s.map(sub)),
    };
    let end = to_new(t, b_old.horizon.end());
    let horizon = match b_old.horizon {
        Horizon::Fixed(_) => Horizon::Fixed(end),
        Horizon::Free(_) => Horizon::Free(end),
    };

    Ok(SwitchedProblem {
        name: p.name.clone(),
        space: space.clone(),
        modes,
        shared_set: p.shared_set.map(sub),
        boundary: BoundarySpec {
            initial,
            terminal,
            horizon,
            terminal_cost: b_old.terminal_cost.as_ref().map(|phi| sub(phi).scale(1.0 / b[t])),
        },
        integral_constraints: p
            .integral_constraints
            .iter()
            .map(|ic| IntegralConstraint {
                name: ic.name.clone(),
                integrands: ic.integrands.iter().map(sub).collect(),
                bound: ic.bound / b[t],
                sense: ic.sense,
            })
            .collect(),
        scaling_box: p
            .scaling_box
            .iter()
            .enumerate()
            .map(|(i, iv)| Interval::new(to_new(i, iv.lo), to_new(i, iv.hi)))
            .collect(),
        initial_time: to_new(t, p.initial_time),
    })
}

/// Moments of the pushed-forward initial distribution, expanded binomially
/// from the given ones.
fn transform_moments(
    p: &SwitchedProblem,
    moments: &[(MultiIndex, f64)],
    a: &[f64],
    b: &[f64],
) -> Result<Vec<(MultiIndex, f64)>, ProblemError> {
    let space = &p.space;
    let states = p.state_indices();
    let full = |alpha: &MultiIndex| -> MultiIndex {
        let mut e = vec![0; space.len()];
        for (k, &i) in states.iter().enumerate() {
            e[i] = alpha.get(k);
        }
        MultiIndex::new(e)
    };
    let known: HashMap<MultiIndex, f64> = moments.iter().map(|(k, v)| (full(k), *v)).collect();
    let zero = MultiIndex::zero(space.len());
    // z_new = (z_old - a) / b
    let inverse: Vec<Polynomial> = (0..space.len())
        .map(|i| {
            &Polynomial::var(space, i).scale(1.0 / b[i]) - &Polynomial::constant(space, a[i] / b[i])
        })
        .collect();
    let mut out = Vec::with_capacity(moments.len());
    for (alpha, _) in moments {
        let q = Polynomial::monomial(space, full(alpha), 1.0)
            .compose(&inverse)
            .expect("same space");
        let mut value = 0.0;
        for (k, c) in q.terms() {
            let m = match known.get(k) {
                Some(&m) => m,
                None if *k == zero => 1.0,
                None => {
                    return Err(ProblemError::Validation(format!(
                        "initial distribution lacks the moment of exponents {:?} needed to rescale {:?}",
                        k.exponents(),
                        alpha.exponents()
                    )))
                }
            };
            value += c * m;
        }
        out.push((alpha.clone(), value));
    }
    Ok(out)
}

/// Appends the ball `R^2 - sum z_i^2 >= 0` with `R^2` the number of variables,
/// implied by the unit box. The shared ball covers time, states and lifts;
/// modes with controls get one over their own variables as well. Idempotent.
pub fn augment_ball(p: &SwitchedProblem) -> SwitchedProblem {
    let mut out = p.clone();
    let ball = |vars: &[usize]| {
        let mut g = Polynomial::constant(&p.space, vars.len() as f64);
        for &i in vars {
            g = &g - &Polynomial::var(&p.space, i).pow(2);
        }
        SemialgebraicSet {
            inequalities: vec![g],
            equalities: Vec::new(),
        }
    };
    out.shared_set.extend_unique(&ball(&p.shared_vars()));
    for j in 0..p.modes.len() {
        if p.modes[j].controls.is_empty() {
            continue;
        }
        let vars = p.mode_vars(j);
        let set = out.modes[j].extra_set.get_or_insert_with(Default::default);
        set.extend_unique(&ball(&vars));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::parse_problem;

    const DI: &str = r#"
[space]
time = "t"
states = [{ name = "x1", box = [-2.0, 2.0] }, { name = "x2", box = [-2.0, 2.0] }]
[mode.minus]
dynamics = ["x2", "-1"]
lagrangian = "1"
[mode.plus]
dynamics = ["x2", "1"]
lagrangian = "1"
[set]
inequalities = ["x2 + 1", "4 - x1^2 - x2^2"]
[boundary]
horizon = { free = 4.0 }
initial = { fixed = [1.0, 1.0] }
terminal = { fixed = [0.0, 0.0] }
"#;

    fn max_coeff_diff(a: &Polynomial, b: &Polynomial) -> f64 {
        (a - b).max_abs_coeff()
    }

    #[test]
    fn time_interval_maps_to_unit() {
        let p = parse_problem(DI).unwrap();
        let (s, sc) = scale(&p).unwrap();
        assert_eq!(s.initial_time, -1.0);
        assert_eq!(s.boundary.horizon, Horizon::Free(1.0));
        assert_eq!(sc.time_factor(), 0.5);
        // dx1/dt~ = (h_t / h_1) x2 = (2 / 2) * 2 x2~
        let f = &s.modes[0].dynamics[0];
        assert_eq!(f.coefficient(&MultiIndex::new(vec![0, 0, 1])), 2.0);
        assert_eq!(s.boundary.initial, InitialSpec::FixedPoint(vec![0.5, 0.5]));
        for iv in &s.scaling_box {
            assert_eq!(*iv, Interval::unit());
        }
    }

    #[test]
    fn identity_box_leaves_problem_unchanged() {
        let text = DI
            .replace("[-2.0, 2.0]", "[-1.0, 1.0]")
            .replace("free = 4.0", "fixed = 2.0")
            .replace("fixed = [1.0, 1.0]", "fixed = [0.5, 0.5]")
            .replace("4 - x1^2", "1 - x1^2");
        let p = parse_problem(&text).unwrap();
        let mut shifted = p.clone();
        // the time window [0, 2] becomes [-1, 1] with the same half width
        shifted.initial_time = -1.0;
        shifted.boundary.horizon = Horizon::Fixed(1.0);
        shifted.scaling_box[0] = Interval::unit();
        let t = shifted.time_index();
        let tt = Polynomial::var(&p.space, t);
        let shift = &tt + &Polynomial::constant(&p.space, 1.0);
        let mut images: Vec<Polynomial> =
            (0..p.space.len()).map(|i| Polynomial::var(&p.space, i)).collect();
        images[t] = shift;
        shifted.shared_set = p.shared_set.map(|g| g.compose(&images).unwrap());
        let (s, sc) = scale(&p).unwrap();
        assert_eq!(sc.time_factor(), 1.0);
        assert_eq!(s, shifted);
    }

    #[test]
    fn scale_unscale_round_trip() {
        let p = parse_problem(DI).unwrap();
        let (s, sc) = scale(&p).unwrap();
        let back = unscale(&s, &sc).unwrap();
        for (m0, m1) in p.modes.iter().zip(&back.modes) {
            for (f0, f1) in m0.dynamics.iter().zip(&m1.dynamics) {
                assert!(max_coeff_diff(f0, f1) < 1e-12);
            }
            assert!(max_coeff_diff(&m0.lagrangian, &m1.lagrangian) < 1e-12);
        }
        for (g0, g1) in p.shared_set.inequalities.iter().zip(&back.shared_set.inequalities) {
            assert!(max_coeff_diff(g0, g1) < 1e-12);
        }
        assert_eq!(back.boundary.horizon, p.boundary.horizon);
        assert_eq!(back.initial_time, p.initial_time);
        assert_eq!(back.boundary.initial, p.boundary.initial);
        for (a, b) in p.scaling_box.iter().zip(&back.scaling_box) {
            assert!((a.lo - b.lo).abs() < 1e-12 && (a.hi - b.hi).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_interval_is_rejected() {
        let mut p = parse_problem(DI).unwrap();
        p.scaling_box[1] = Interval::new(1.0, 1.0);
        assert!(matches!(scale(&p), Err(ProblemError::Validation(_))));
    }

    #[test]
    fn distribution_moments_are_pushed_forward() {
        let text = DI.replace(
            "initial = { fixed = [1.0, 1.0] }",
            "initial = { distribution = [\
             { exponents = [1, 0], value = 1.0 }, { exponents = [0, 1], value = 0.5 },\
             { exponents = [2, 0], value = 1.25 }] }",
        );
        let p = parse_problem(&text).unwrap();
        let (s, _) = scale(&p).unwrap();
        let InitialSpec::Distribution(m) = &s.boundary.initial else {
            panic!()
        };
        // x~ = x / 2
        assert_eq!(m[0].1, 0.5);
        assert_eq!(m[1].1, 0.25);
        assert!((m[2].1 - 0.3125).abs() < 1e-15);
    }

    #[test]
    fn ball_is_added_once() {
        let p = parse_problem(DI).unwrap();
        let (s, _) = scale(&p).unwrap();
        let once = augment_ball(&s);
        assert_eq!(once.shared_set.inequalities.len(), s.shared_set.inequalities.len() + 1);
        let g = once.shared_set.inequalities.last().unwrap();
        assert_eq!(g.to_string(), "3 - 1*t^2 - 1*x1^2 - 1*x2^2");
        assert_eq!(augment_ball(&once), once);
    }
}
