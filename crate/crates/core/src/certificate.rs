//! Dual polynomial certificates.
//!
//! The dual of the moment relaxation is a polynomial `v(t, x)` (one
//! coefficient per dynamics row) and one sum of squares per localizing block.
//! Feasibility of the dual means, for every mode `j`,
//!
//! `l_j - L'_j v = sum_i g_i s_ij + sum_e h_e q_e + sum_k lambda_k h_kj`
//!
//! with `s_ij` SOS, `q_e` arbitrary multipliers of the support equalities and
//! `lambda_k` the multipliers of integral constraints. Everything here works
//! on the scaled problem the relaxation was assembled from.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::extraction::Trajectory;
use crate::poly::{lie_derivative, MultiIndex, Polynomial};
use crate::problem::{Horizon, InitialSpec, Sense, SwitchedProblem, TerminalSpec};
use crate::relaxation::{BlockKind, MeasureRole, RowKind, SDPInstance};
use crate::sdp::SDPSolution;
use crate::{Error, Result};

/// SOS multiplier `s = b' G b` of a localizing block with weight `g`.
#[derive(Clone, Debug)]
pub struct GramMultiplier {
    pub measure: MeasureRole,
    /// Support inequality index, `None` for the moment matrix (`g = 1`).
    pub constraint: Option<usize>,
    pub weight: Polynomial,
    pub basis: Vec<MultiIndex>,
    pub gram: DMatrix<f64>,
    pub sos: Polynomial,
}

impl GramMultiplier {
    pub fn min_eigenvalue(&self) -> f64 {
        if self.gram.nrows() == 0 {
            return 0.0;
        }
        self.gram.clone().symmetric_eigenvalues().min()
    }
}

/// Free multiplier `q` of a (normalized) support equality `h`.
#[derive(Clone, Debug)]
pub struct EqualityMultiplier {
    pub measure: MeasureRole,
    pub equality: usize,
    pub h: Polynomial,
    pub q: Polynomial,
}

#[derive(Clone, Debug)]
pub struct Certificate {
    pub order: u32,
    pub v: Polynomial,
    pub sos: Vec<GramMultiplier>,
    pub ideal: Vec<EqualityMultiplier>,
    /// Multipliers of the unit-mass rows of the boundary measures.
    pub normalization: Vec<(MeasureRole, f64)>,
    /// Multipliers of prescribed initial moments: full-space index, multiplier, value.
    pub initial_moments: Vec<(MultiIndex, f64, f64)>,
    /// One multiplier per integral constraint.
    pub integral: Vec<f64>,
    pub residuals: Vec<f64>,
    pub boundary_residuals: Vec<(MeasureRole, f64)>,
    pub dual_value: f64,
}

impl Certificate {
    /// Smallest eigenvalue over all Gram matrices.
    pub fn min_gram_eigenvalue(&self) -> f64 {
        self.sos
            .iter()
            .map(GramMultiplier::min_eigenvalue)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn summary(&self) -> CertificateSummary {
        CertificateSummary {
            order: self.order,
            v: self.v.terms().map(|(k, c)| (k.exponents().to_vec(), c)).collect(),
            v_text: self.v.to_string(),
            residuals: self.residuals.clone(),
            boundary_residuals: self
                .boundary_residuals
                .iter()
                .map(|(r, x)| (r.label(), *x))
                .collect(),
            min_gram_eigenvalue: self.min_gram_eigenvalue(),
            dual_value: self.dual_value,
        }
    }
}

/// Serializable digest of a certificate.
#[derive(Clone, Debug, Serialize)]
pub struct CertificateSummary {
    pub order: u32,
    pub v: Vec<(Vec<u32>, f64)>,
    pub v_text: String,
    pub residuals: Vec<f64>,
    pub boundary_residuals: Vec<(String, f64)>,
    pub min_gram_eigenvalue: f64,
    pub dual_value: f64,
}

fn sos_from_gram(p: &SwitchedProblem, basis: &[MultiIndex], gram: &DMatrix<f64>) -> Polynomial {
    let mut acc: BTreeMap<MultiIndex, f64> = BTreeMap::new();
    for a in 0..basis.len() {
        for b in 0..basis.len() {
            *acc.entry(basis[a].add(&basis[b])).or_insert(0.0) += gram[(a, b)];
        }
    }
    Polynomial::from_terms(&p.space, acc)
}

/// Rebuilds the certificate of an order-`d` relaxation of the scaled problem
/// `p` from the solver's multipliers.
pub fn recover(sol: &SDPSolution, inst: &SDPInstance, p: &SwitchedProblem) -> Result<Certificate> {
    if sol.z.len() != inst.equalities.len() || sol.gram.len() != inst.blocks.len() {
        return Err(Error::Certificate(format!(
            "solution carries {} row and {} block multipliers for {} rows and {} blocks",
            sol.z.len(),
            sol.gram.len(),
            inst.equalities.len(),
            inst.blocks.len()
        )));
    }
    if sol.z.iter().chain(sol.gram.iter().flat_map(|g| g.iter())).any(|v| !v.is_finite()) {
        return Err(Error::Certificate("dual multipliers are not finite".into()));
    }
    let layout = &inst.layout;
    let space = &p.space;
    let mut v = Polynomial::zero(space);
    let mut ideal: BTreeMap<(usize, usize), Polynomial> = BTreeMap::new();
    let mut normalization = Vec::new();
    let mut initial_moments = Vec::new();
    let mut integral = vec![0.0; p.integral_constraints.len()];
    let states = p.state_indices();
    for (row, &z) in inst.equalities.iter().zip(&sol.z) {
        match &row.kind {
            RowKind::Dynamics(alpha) => v = &v + &Polynomial::monomial(space, alpha.clone(), z),
            RowKind::Normalization(m) => normalization.push((layout.measures[*m].role, z)),
            RowKind::Support {
                measure,
                equality,
                multiplier,
            } => {
                let q = ideal.entry((*measure, *equality)).or_insert_with(|| Polynomial::zero(space));
                *q = &*q + &Polynomial::monomial(space, multiplier.clone(), z);
            }
            RowKind::InitialMoment(beta) => {
                let mut e = vec![0; space.len()];
                for (k, &i) in states.iter().enumerate() {
                    e[i] = beta.get(k);
                }
                initial_moments.push((MultiIndex::new(e), z, row.rhs));
            }
            RowKind::Integral(k) => integral[*k] = z,
        }
    }
    let mut sos = Vec::new();
    for (block, gram) in inst.blocks.iter().zip(&sol.gram) {
        match &block.kind {
            BlockKind::Localizing {
                measure,
                constraint,
                weight,
                basis,
            } => sos.push(GramMultiplier {
                measure: layout.measures[*measure].role,
                constraint: *constraint,
                weight: weight.clone(),
                basis: basis.clone(),
                gram: gram.clone(),
                sos: sos_from_gram(p, basis, gram),
            }),
            BlockKind::Integral { constraint } => {
                let sign = match p.integral_constraints[*constraint].sense {
                    Sense::Ge => -1.0,
                    _ => 1.0,
                };
                integral[*constraint] = -sign * gram[(0, 0)];
            }
        }
    }
    let ideal = ideal
        .into_iter()
        .map(|((m, e), q)| {
            let h = &layout.measures[m].support.equalities[e];
            EqualityMultiplier {
                measure: layout.measures[m].role,
                equality: e,
                h: h.scale(1.0 / h.max_abs_coeff()),
                q,
            }
        })
        .collect();
    let mut c = Certificate {
        order: layout.order,
        v,
        sos,
        ideal,
        normalization,
        initial_moments,
        integral,
        residuals: Vec::new(),
        boundary_residuals: Vec::new(),
        dual_value: 0.0,
    };
    c.residuals = identity_residual(p, &c)?;
    c.boundary_residuals = boundary_residuals(p, &c)?;
    c.dual_value = dual_value(p, &c)?;
    Ok(c)
}

fn space_check(p: &SwitchedProblem, c: &Certificate) -> Result<()> {
    if c.v.space() != &p.space && **c.v.space() != *p.space {
        return Err(Error::Certificate("certificate and problem live on different variable spaces".into()));
    }
    Ok(())
}

/// `sum g s + sum h q` over the multipliers of one measure.
fn multiplier_sum(p: &SwitchedProblem, c: &Certificate, role: MeasureRole) -> Result<Polynomial> {
    let mut acc = Polynomial::zero(&p.space);
    for m in c.sos.iter().filter(|m| m.measure == role) {
        acc = acc.try_add(&m.weight.try_mul(&m.sos)?)?;
    }
    for m in c.ideal.iter().filter(|m| m.measure == role) {
        acc = acc.try_add(&m.h.try_mul(&m.q)?)?;
    }
    Ok(acc)
}

/// Defect of mode `j` as a polynomial.
pub fn mode_defect(p: &SwitchedProblem, c: &Certificate, j: usize) -> Result<Polynomial> {
    space_check(p, c)?;
    let mode = &p.modes[j];
    let mut rhs = lie_derivative(&c.v, &mode.dynamics)?;
    rhs = rhs.try_add(&multiplier_sum(p, c, MeasureRole::Modal(j))?)?;
    for (k, ic) in p.integral_constraints.iter().enumerate() {
        rhs = rhs.try_add(&ic.integrands[j].scale(c.integral[k]))?;
    }
    Ok(mode.lagrangian.try_sub(&rhs)?)
}

/// Per mode, the largest coefficient of the identity defect.
pub fn identity_residual(p: &SwitchedProblem, c: &Certificate) -> Result<Vec<f64>> {
    (0..p.modes.len())
        .map(|j| mode_defect(p, c, j).map(|d| d.max_abs_coeff()))
        .collect()
}

/// Defects of the boundary identities: `phi + v - z_N = sum g s + sum h q` on
/// the terminal measure and `-v - z_N - sum z_b x^b = sum g s + sum h q` on the
/// initial measure.
pub fn boundary_residuals(p: &SwitchedProblem, c: &Certificate) -> Result<Vec<(MeasureRole, f64)>> {
    space_check(p, c)?;
    let mut out = Vec::new();
    for &(role, zn) in &c.normalization {
        let mut lhs = match role {
            MeasureRole::Terminal => {
                let phi = p.boundary.terminal_cost.clone().unwrap_or_else(|| Polynomial::zero(&p.space));
                phi.try_add(&c.v)?
            }
            _ => {
                let mut l = c.v.scale(-1.0);
                for (k, z, _) in &c.initial_moments {
                    l = l.try_sub(&Polynomial::monomial(&p.space, k.clone(), *z))?;
                }
                l
            }
        };
        lhs = lhs.try_sub(&Polynomial::constant(&p.space, zn))?;
        let defect = lhs.try_sub(&multiplier_sum(p, c, role)?)?;
        out.push((role, defect.max_abs_coeff()));
    }
    Ok(out)
}

/// Dual objective of the certificate: the fixed boundary values of `v`, the
/// normalization and initial-moment multipliers and the integral bounds.
pub fn dual_value(p: &SwitchedProblem, c: &Certificate) -> Result<f64> {
    space_check(p, c)?;
    let mut val = 0.0;
    if let (TerminalSpec::FixedPoint(x), Horizon::Fixed(end)) = (&p.boundary.terminal, p.boundary.horizon) {
        let pt = p.point(end, x);
        val += c.v.eval(&pt);
        if let Some(phi) = &p.boundary.terminal_cost {
            val += phi.eval(&pt);
        }
    }
    if let InitialSpec::FixedPoint(x) = &p.boundary.initial {
        val -= c.v.eval(&p.point(p.initial_time, x));
    }
    val += c.normalization.iter().map(|n| n.1).sum::<f64>();
    val += c.initial_moments.iter().map(|(_, z, m)| z * m).sum::<f64>();
    val += p
        .integral_constraints
        .iter()
        .zip(&c.integral)
        .map(|(ic, l)| ic.bound * l)
        .sum::<f64>();
    Ok(val)
}

/// Per mode, the trapezoid integral of `d_j (l_j - L'_j v)` along a simulated
/// arc given in the coordinates of `p`. For an optimal arc and an exact
/// certificate the total is the gap between the arc's cost and the bound.
pub fn arc_residual(p: &SwitchedProblem, c: &Certificate, arc: &Trajectory) -> Result<Vec<f64>> {
    space_check(p, c)?;
    if !arc.admissible() {
        return Err(Error::Certificate(format!(
            "arc leaves the constraint set by {:.3e}",
            arc.max_violation
        )));
    }
    let controls = p.space.indices_with(crate::poly::Role::Control);
    let gaps: Vec<Polynomial> = p
        .modes
        .iter()
        .map(|m| Ok(m.lagrangian.try_sub(&lie_derivative(&c.v, &m.dynamics)?)?))
        .collect::<Result<_>>()?;
    let mut out = vec![0.0; p.modes.len()];
    for k in 0..arc.step_duty.len() {
        let h = arc.times[k + 1] - arc.times[k];
        if h == 0.0 {
            continue;
        }
        let mut a = arc.points[k].clone();
        let mut b = arc.points[k + 1].clone();
        if let Some(u) = arc.step_controls.get(k) {
            for (&i, &val) in controls.iter().zip(u) {
                a[i] = val;
                b[i] = val;
            }
        }
        for (j, g) in gaps.iter().enumerate() {
            let d = arc.step_duty[k][j];
            if d != 0.0 {
                out[j] += 0.5 * h * d * (g.eval(&a) + g.eval(&b));
            }
        }
    }
    Ok(out)
}

/// Slack of the boundary identities at the ends of an arc: `phi + v - z_N`
/// at the terminal point when a terminal measure exists, and the matching
/// initial term. Together with [`arc_residual`] it splits the gap between the
/// arc's cost and [`dual_value`], up to the identity residuals.
pub fn boundary_slack(p: &SwitchedProblem, c: &Certificate, arc: &Trajectory) -> Result<f64> {
    space_check(p, c)?;
    let (Some(first), Some(last)) = (arc.points.first(), arc.points.last()) else {
        return Err(Error::Certificate("arc has no points".into()));
    };
    let mut slack = 0.0;
    for &(role, zn) in &c.normalization {
        slack += match role {
            MeasureRole::Terminal => {
                let phi = p.boundary.terminal_cost.as_ref().map_or(0.0, |f| f.eval(last));
                phi + c.v.eval(last) - zn
            }
            _ => {
                let moments: f64 = c.initial_moments.iter().map(|(k, z, _)| z * k.eval(first)).sum();
                -c.v.eval(first) - zn - moments
            }
        };
    }
    Ok(slack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{parse_problem, scale};
    use crate::relaxation::assemble;
    use crate::sdp::{solve, SolverSettings};

    const TOY: &str = r#"
[space]
time = "t"
states = [{ name = "x", box = [-1.0, 1.0] }]
[mode.a]
dynamics = ["0"]
lagrangian = "1"
[mode.b]
dynamics = ["0"]
lagrangian = "1"
[boundary]
horizon = { fixed = 1.0 }
initial = { fixed = [0.0] }
terminal = { fixed = [0.0] }
"#;

    fn bare(p: &SwitchedProblem, v: Polynomial) -> Certificate {
        Certificate {
            order: 1,
            v,
            sos: Vec::new(),
            ideal: Vec::new(),
            normalization: Vec::new(),
            initial_moments: Vec::new(),
            integral: vec![0.0; p.integral_constraints.len()],
            residuals: Vec::new(),
            boundary_residuals: Vec::new(),
            dual_value: 0.0,
        }
    }

    #[test]
    fn time_certifies_the_horizon() {
        let p = parse_problem(TOY).unwrap();
        let t = Polynomial::var(&p.space, p.time_index());
        let c = bare(&p, t);
        assert_eq!(identity_residual(&p, &c).unwrap(), vec![0.0, 0.0]);
        assert_eq!(dual_value(&p, &c).unwrap(), 1.0);
    }

    #[test]
    fn recovered_toy_certificate_is_exact() {
        let (p, _) = scale(&parse_problem(TOY).unwrap()).unwrap();
        let (inst, _) = assemble(&p, 1).unwrap();
        let sol = solve(&inst, &SolverSettings::default()).unwrap();
        let c = recover(&sol, &inst, &p).unwrap();
        assert!(c.residuals.iter().all(|&r| r < 1e-7), "{:?}", c.residuals);
        assert!((c.dual_value - sol.dual_obj).abs() < 1e-9);
        // scaled time runs over [-1, 1] at unit cost per scaled second
        assert!((c.dual_value - 2.0).abs() < 1e-6);
    }

    #[test]
    fn zero_multipliers_leave_the_data() {
        let text = TOY.replace("lagrangian = \"1\"", "lagrangian = \"x^2\"");
        let p = parse_problem(&text).unwrap();
        let c = bare(&p, Polynomial::zero(&p.space));
        assert_eq!(identity_residual(&p, &c).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn space_mismatch_is_rejected() {
        let p = parse_problem(TOY).unwrap();
        let other = parse_problem(&TOY.replace("\"x\"", "\"y\"")).unwrap();
        let c = bare(&other, Polynomial::zero(&other.space));
        assert!(identity_residual(&p, &c).is_err());
    }
}
