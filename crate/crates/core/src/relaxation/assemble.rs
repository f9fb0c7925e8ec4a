use std::collections::BTreeMap;

use super::*;
use crate::poly::{lie_derivative, monomials_on};
use crate::problem::{Horizon, Sense};
use crate::{Error, Result};

/// Moment functional of measure `m` applied to `q`, as sparse coefficients on
/// the flat moment vector.
pub(crate) fn linear_form(layout: &MeasureLayout, m: usize, q: &Polynomial) -> Result<Vec<(usize, f64)>> {
    let meas = &layout.measures[m];
    q.terms()
        .map(|(k, c)| {
            meas.position(k).map(|i| (i, c)).ok_or_else(|| {
                Error::Relaxation(format!(
                    "monomial {k:?} of degree {} exceeds the {} measure truncation 2d = {}",
                    k.degree(),
                    meas.role.label(),
                    2 * layout.order
                ))
            })
        })
        .collect()
}

fn merge(entries: impl IntoIterator<Item = (usize, f64)>) -> Vec<(usize, f64)> {
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    for (i, a) in entries {
        *acc.entry(i).or_insert(0.0) += a;
    }
    acc.into_iter().filter(|&(_, a)| a != 0.0).collect()
}

fn initial_point(p: &SwitchedProblem) -> Option<Vec<f64>> {
    match &p.boundary.initial {
        InitialSpec::FixedPoint(x) => Some(p.point(p.initial_time, x)),
        _ => None,
    }
}

fn terminal_point(p: &SwitchedProblem) -> Option<Vec<f64>> {
    match (&p.boundary.terminal, p.boundary.horizon) {
        (TerminalSpec::FixedPoint(x), Horizon::Fixed(end)) => Some(p.point(end, x)),
        _ => None,
    }
}

/// One row per test monomial `v_alpha` over `(t, x)` with `deg alpha <= 2d`
/// whose images under every mode generator stay within degree `2d`:
///
/// `sum_j L_j(L'_j v) - L_T(v) + L_0(v) = v(T, x_T) - v(t_0, x_0)`,
///
/// where a boundary term sits on the left when its measure exists and on the
/// right otherwise. Boundary measures also get a unit-mass row, and an initial
/// distribution fixes the initial measure's moments it provides.
pub fn dynamics_rows(p: &SwitchedProblem, layout: &MeasureLayout) -> Result<Vec<EqualityRow>> {
    let d2 = 2 * layout.order;
    let nvars = p.space.len();
    let initial = layout.find(MeasureRole::Initial);
    let terminal = layout.find(MeasureRole::Terminal);
    let x0 = initial_point(p);
    let xt = terminal_point(p);
    let mut rows = Vec::new();
    'alpha: for alpha in monomials_on(nvars, &p.dynamic_vars(), d2) {
        let v = Polynomial::monomial(&p.space, alpha.clone(), 1.0);
        let mut images = Vec::with_capacity(p.modes.len());
        for m in &p.modes {
            let lv = lie_derivative(&v, &m.dynamics)?;
            if lv.degree() > d2 {
                continue 'alpha;
            }
            images.push(lv);
        }
        let mut entries = Vec::new();
        for (j, lv) in images.iter().enumerate() {
            let m = layout.find(MeasureRole::Modal(j)).expect("modal measure");
            entries.extend(linear_form(layout, m, lv)?);
        }
        let mut rhs = 0.0;
        match terminal {
            Some(m) => entries.extend(linear_form(layout, m, &v.scale(-1.0))?),
            None => rhs += v.eval(xt.as_ref().expect("fixed terminal point")),
        }
        match initial {
            Some(m) => entries.extend(linear_form(layout, m, &v)?),
            None => rhs -= v.eval(x0.as_ref().expect("fixed initial point")),
        }
        let entries = merge(entries);
        if entries.is_empty() {
            if rhs.abs() > 1e-12 {
                return Err(Error::Relaxation(format!(
                    "test monomial {alpha:?} gives the inconsistent row 0 = {rhs}"
                )));
            }
            continue;
        }
        rows.push(EqualityRow {
            kind: RowKind::Dynamics(alpha),
            entries,
            rhs,
        });
    }
    for m in [initial, terminal].into_iter().flatten() {
        rows.push(EqualityRow {
            kind: RowKind::Normalization(m),
            entries: vec![(layout.measures[m].offset, 1.0)],
            rhs: 1.0,
        });
    }
    if let (Some(m), InitialSpec::Distribution(moments)) = (initial, &p.boundary.initial) {
        let states = p.state_indices();
        for (alpha, value) in moments {
            if alpha.degree() > d2 || alpha.is_zero() {
                continue;
            }
            let mut e = vec![0; nvars];
            for (k, &i) in states.iter().enumerate() {
                e[i] = alpha.get(k);
            }
            let full = MultiIndex::new(e);
            let pos = layout.measures[m].position(&full).expect("degree checked");
            rows.push(EqualityRow {
                kind: RowKind::InitialMoment(alpha.clone()),
                entries: vec![(pos, 1.0)],
                rhs: *value,
            });
        }
    }
    Ok(rows)
}

/// `L(h m) = 0` for every support equality `h` of every measure and every
/// multiplier `m` with `deg(h m) <= 2d`. Multipliers divisible by the leading
/// power of an earlier rule are skipped: those rows are combinations of the
/// earlier rule's rows.
pub fn support_rows(p: &SwitchedProblem, layout: &MeasureLayout) -> Result<Vec<EqualityRow>> {
    let d2 = 2 * layout.order;
    let nvars = p.space.len();
    let mut rows = Vec::new();
    for (mi, meas) in layout.measures.iter().enumerate() {
        for (e, h) in meas.support.equalities.iter().enumerate() {
            let dh = h.degree();
            if dh > d2 {
                return Err(Error::Relaxation(format!(
                    "equality {h} of the {} measure exceeds degree 2d = {d2}",
                    meas.role.label()
                )));
            }
            let scale = 1.0 / h.max_abs_coeff();
            for mult in monomials_on(nvars, &meas.vars, d2 - dh) {
                let skip = meas
                    .rules
                    .iter()
                    .any(|r| r.equality < e && mult.get(r.var) >= r.power);
                if skip {
                    continue;
                }
                let entries = merge(linear_form(layout, mi, &h.shift(&mult).scale(scale))?);
                if entries.is_empty() {
                    continue;
                }
                rows.push(EqualityRow {
                    kind: RowKind::Support {
                        measure: mi,
                        equality: e,
                        multiplier: mult,
                    },
                    entries,
                    rhs: 0.0,
                });
            }
        }
    }
    Ok(rows)
}

/// Moment and localizing matrices of every measure. Each support inequality
/// is first reduced by the measure's rules; those that become constant are
/// dropped (or rejected when negative), the rest are scaled to unit maximum
/// coefficient.
pub fn localizing_blocks(p: &SwitchedProblem, layout: &MeasureLayout) -> Result<Vec<PsdBlock>> {
    let d = layout.order;
    let nvars = p.space.len();
    let one = Polynomial::constant(&p.space, 1.0);
    let mut blocks = Vec::new();
    for (mi, meas) in layout.measures.iter().enumerate() {
        let weights = std::iter::once((None, one.clone()))
            .chain(meas.support.inequalities.iter().cloned().enumerate().map(|(i, g)| (Some(i), g)));
        for (constraint, g) in weights {
            let g = meas.reduce(&g).prune(1e-14);
            if constraint.is_some() && g.degree() == 0 {
                let c = g.coefficient(&MultiIndex::zero(nvars));
                if c < -1e-12 {
                    return Err(Error::Relaxation(format!(
                        "support of the {} measure is empty: a constraint reduces to {c}",
                        meas.role.label()
                    )));
                }
                continue;
            }
            let g = g.scale(1.0 / g.max_abs_coeff());
            let half = g.degree().div_ceil(2);
            if half > d {
                return Err(Error::Relaxation(format!(
                    "constraint {g} of the {} measure exceeds degree 2d = {}",
                    meas.role.label(),
                    2 * d
                )));
            }
            let basis = meas.basis(nvars, d - half);
            let mut terms = Vec::new();
            for a in 0..basis.len() {
                for b in a..basis.len() {
                    let q = g.shift(&basis[a].add(&basis[b]));
                    for (var, coeff) in linear_form(layout, mi, &q)? {
                        terms.push(MatrixTerm {
                            row: a,
                            col: b,
                            var,
                            coeff,
                        });
                    }
                }
            }
            blocks.push(PsdBlock {
                kind: BlockKind::Localizing {
                    measure: mi,
                    constraint,
                    weight: g,
                    basis: basis.clone(),
                },
                form: LinearMatrixForm {
                    size: basis.len(),
                    constant: Vec::new(),
                    terms,
                },
            });
        }
    }
    Ok(blocks)
}

/// Integral constraints `sum_j L_j(h_j) (sense) e`: equality rows for `=`,
/// `1 x 1` blocks `e - sum_j L_j(h_j) >= 0` (or its negation) otherwise.
pub fn integral_rows(p: &SwitchedProblem, layout: &MeasureLayout) -> Result<(Vec<EqualityRow>, Vec<PsdBlock>)> {
    let mut rows = Vec::new();
    let mut blocks = Vec::new();
    for (k, ic) in p.integral_constraints.iter().enumerate() {
        let mut entries = Vec::new();
        for (j, h) in ic.integrands.iter().enumerate() {
            let m = layout.find(MeasureRole::Modal(j)).expect("modal measure");
            entries.extend(linear_form(layout, m, h).map_err(|e| {
                Error::Relaxation(format!("integral constraint '{}': {e}", ic.name))
            })?);
        }
        let entries = merge(entries);
        let sign = match ic.sense {
            Sense::Eq => {
                rows.push(EqualityRow {
                    kind: RowKind::Integral(k),
                    entries,
                    rhs: ic.bound,
                });
                continue;
            }
            Sense::Le => 1.0,
            Sense::Ge => -1.0,
        };
        blocks.push(PsdBlock {
            kind: BlockKind::Integral { constraint: k },
            form: LinearMatrixForm {
                size: 1,
                constant: vec![(0, 0, sign * ic.bound)],
                terms: entries
                    .into_iter()
                    .map(|(var, a)| MatrixTerm {
                        row: 0,
                        col: 0,
                        var,
                        coeff: -sign * a,
                    })
                    .collect(),
            },
        });
    }
    Ok((rows, blocks))
}

/// Order-`d` relaxation of a scaled problem.
pub fn assemble(p: &SwitchedProblem, d: u32) -> Result<(SDPInstance, RelaxationInfo)> {
    let d0 = first_order(p);
    if d < d0 {
        return Err(Error::Relaxation(format!(
            "order {d} is below the first relaxation order {d0}"
        )));
    }
    let layout = build_layout(p, d);
    let mut equalities = dynamics_rows(p, &layout)?;
    equalities.extend(support_rows(p, &layout)?);
    let mut blocks = localizing_blocks(p, &layout)?;
    let (int_rows, int_blocks) = integral_rows(p, &layout)?;
    equalities.extend(int_rows);
    let inequality_count = int_blocks.len();
    blocks.extend(int_blocks);

    let mut cost = Vec::new();
    for (j, m) in p.modes.iter().enumerate() {
        let mi = layout.find(MeasureRole::Modal(j)).expect("modal measure");
        cost.extend(linear_form(&layout, mi, &m.lagrangian)?);
    }
    let mut cost_offset = 0.0;
    if let Some(phi) = &p.boundary.terminal_cost {
        match layout.find(MeasureRole::Terminal) {
            Some(mt) => cost.extend(linear_form(&layout, mt, phi)?),
            None => cost_offset += phi.eval(&terminal_point(p).expect("fixed terminal point")),
        }
    }
    let cost = merge(cost);

    let info = RelaxationInfo {
        order: d,
        first_order: d0,
        moment_count: layout.size,
        measure_counts: layout.measures.iter().map(|m| m.len()).collect(),
        block_sizes: blocks.iter().map(|b| b.form.size).collect(),
        equality_count: equalities.len(),
        inequality_count,
    };
    Ok((
        SDPInstance {
            layout,
            blocks,
            equalities,
            cost,
            cost_offset,
        },
        info,
    ))
}
