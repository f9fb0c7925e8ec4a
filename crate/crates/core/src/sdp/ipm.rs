use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use super::{SDPSolution, SolveStatus, SolverSettings};
use crate::relaxation::{LinearMatrixForm, MatrixTerm, SDPInstance};
use crate::{Error, Result};

const DIVERGENCE: f64 = 1e12;

/// One PSD block `F0 + sum_k y_k F_k` with its terms grouped by variable.
struct Block {
    size: usize,
    f0: DMatrix<f64>,
    terms: Vec<MatrixTerm>,
    groups: Vec<(usize, usize, usize)>,
}

impl Block {
    fn new(form: &LinearMatrixForm) -> Self {
        let s = form.size;
        let mut f0 = DMatrix::zeros(s, s);
        for &(r, c, v) in &form.constant {
            f0[(r, c)] += v;
            if r != c {
                f0[(c, r)] += v;
            }
        }
        let mut terms = form.terms.clone();
        terms.sort_by_key(|t| (t.var, t.row, t.col));
        let mut groups = Vec::new();
        let mut start = 0;
        for k in 1..=terms.len() {
            if k == terms.len() || terms[k].var != terms[start].var {
                groups.push((terms[start].var, start, k));
                start = k;
            }
        }
        Block {
            size: s,
            f0,
            terms,
            groups,
        }
    }

    fn linear(&self, y: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.size, self.size);
        for t in &self.terms {
            let v = t.coeff * y[t.var];
            m[(t.row, t.col)] += v;
            if t.row != t.col {
                m[(t.col, t.row)] += v;
            }
        }
        m
    }

    fn eval(&self, y: &[f64]) -> DMatrix<f64> {
        self.linear(y) + &self.f0
    }

    /// `out[k] += <F_k, m>`.
    fn adjoint_into(&self, m: &DMatrix<f64>, out: &mut [f64]) {
        for t in &self.terms {
            let v = if t.row == t.col {
                m[(t.row, t.row)]
            } else {
                m[(t.row, t.col)] + m[(t.col, t.row)]
            };
            out[t.var] += t.coeff * v;
        }
    }

    /// `b[i][j] += tr(F_i X^-1 F_j Y)` for the variables of this block.
    fn schur_into(&self, xinv: &DMatrix<f64>, y: &DMatrix<f64>, b: &mut DMatrix<f64>) {
        let s = self.size;
        let mut p = DMatrix::zeros(s, s);
        for &(j, js, je) in &self.groups {
            p.fill(0.0);
            for t in &self.terms[js..je] {
                p.ger(t.coeff, &xinv.column(t.row), &y.column(t.col), 1.0);
                if t.row != t.col {
                    p.ger(t.coeff, &xinv.column(t.col), &y.column(t.row), 1.0);
                }
            }
            for &(i, is, ie) in &self.groups {
                let mut v = 0.0;
                for t in &self.terms[is..ie] {
                    v += t.coeff
                        * if t.row == t.col {
                            p[(t.row, t.row)]
                        } else {
                            p[(t.row, t.col)] + p[(t.col, t.row)]
                        };
                }
                b[(i, j)] += v;
            }
        }
    }
}

/// `A y = b` rewritten as `y = y0 + N w`.
struct Elimination {
    /// Rows of `A` scaled to unit norm.
    a: DMatrix<f64>,
    row_scale: Vec<f64>,
    y0: DVector<f64>,
    null: DMatrix<f64>,
    range: DMatrix<f64>,
    range_eigs: DVector<f64>,
}

impl Elimination {
    fn new(inst: &SDPInstance) -> Result<Self> {
        let n = inst.nvars();
        let m = inst.equalities.len();
        let mut a = DMatrix::zeros(m, n);
        let mut b = DVector::zeros(m);
        let mut row_scale = Vec::with_capacity(m);
        for (i, row) in inst.equalities.iter().enumerate() {
            let norm = row.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
            let s = if norm > 0.0 { 1.0 / norm } else { 1.0 };
            for &(k, v) in &row.entries {
                a[(i, k)] += v * s;
            }
            b[i] = row.rhs * s;
            row_scale.push(s);
        }
        let gram = a.transpose() * &a;
        let eig = SymmetricEigen::new(gram);
        let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let tol = 1e-10 * lmax.max(1.0);
        let (mut keep, mut drop) = (Vec::new(), Vec::new());
        for (k, &l) in eig.eigenvalues.iter().enumerate() {
            if l > tol {
                keep.push(k);
            } else {
                drop.push(k);
            }
        }
        let range = eig.eigenvectors.select_columns(&keep);
        let range_eigs = DVector::from_iterator(keep.len(), keep.iter().map(|&k| eig.eigenvalues[k]));
        let null = eig.eigenvectors.select_columns(&drop);
        // least-norm solution of A y = b
        let mut coef = range.transpose() * (a.transpose() * &b);
        for (c, l) in coef.iter_mut().zip(range_eigs.iter()) {
            *c /= l;
        }
        let y0 = &range * coef;
        let resid = (&a * &y0 - &b).amax();
        if resid > 1e-8 * (1.0 + b.amax()) {
            return Err(Error::Solver(format!(
                "equality rows are inconsistent (least-squares residual {resid:.3e})"
            )));
        }
        Ok(Elimination {
            a,
            row_scale,
            y0,
            null,
            range,
            range_eigs,
        })
    }

    /// Least-squares multipliers `z` of `A' z = g`, in the original row scaling.
    fn multipliers(&self, g: &DVector<f64>) -> Vec<f64> {
        let mut coef = self.range.transpose() * g;
        for (c, l) in coef.iter_mut().zip(self.range_eigs.iter()) {
            *c /= l;
        }
        let zs = &self.a * (&self.range * coef);
        zs.iter().zip(&self.row_scale).map(|(z, s)| z * s).collect()
    }
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest `alpha` with `m + alpha dm` PSD, given `m` positive definite.
fn max_step(chol_l: &DMatrix<f64>, dm: &DMatrix<f64>) -> f64 {
    let Some(t) = chol_l.solve_lower_triangular(dm) else {
        return 0.0;
    };
    let Some(w) = chol_l.solve_lower_triangular(&t.transpose()) else {
        return 0.0;
    };
    let lmin = symmetrize(&w).symmetric_eigenvalues().min();
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

struct Iterate {
    y: DVector<f64>,
    x: Vec<DMatrix<f64>>,
    z: Vec<DMatrix<f64>>,
}

/// Solves `min c'y  s.t.  A y = b,  F_i(y) >= 0` for an assembled relaxation.
/// Returns a solution with status in every case where the iteration could
/// start; errors are reserved for malformed or inconsistent instances.
pub fn solve(inst: &SDPInstance, settings: &SolverSettings) -> Result<SDPSolution> {
    settings.validate()?;
    let n = inst.nvars();
    let blocks: Vec<Block> = inst.blocks.iter().map(|b| Block::new(&b.form)).collect();
    for b in &blocks {
        if let Some(t) = b.terms.iter().find(|t| t.var >= n || t.row > t.col || t.col >= b.size) {
            return Err(Error::Solver(format!("malformed block term {t:?}")));
        }
    }
    let mut c = DVector::zeros(n);
    for &(k, v) in &inst.cost {
        c[k] += v;
    }
    let elim = Elimination::new(inst)?;
    let nt = elim.null.transpose();
    let cw = &nt * &c;
    let ntot: usize = blocks.iter().map(|b| b.size).sum();
    let s0: Vec<DMatrix<f64>> = blocks.iter().map(|b| b.eval(elim.y0.as_slice())).collect();
    let s0_norm = s0.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt();
    let cy0 = c.dot(&elim.y0);

    // Gram matrix of the reduced constraint matrices, used to pull each dual
    // direction back onto the affine space of dual feasible matrices
    let gram_w = {
        let mut gy = DMatrix::zeros(n, n);
        for b in &blocks {
            let eye = DMatrix::identity(b.size, b.size);
            b.schur_into(&eye, &eye, &mut gy);
        }
        let gw = symmetrize(&(&nt * (&gy * &elim.null)));
        let reg = 1e-14 * gw.diagonal().amax().max(1e-300);
        Cholesky::new(&gw + DMatrix::identity(gw.nrows(), gw.ncols()) * reg)
            .ok_or_else(|| Error::Solver("constraint matrices are degenerate".into()))?
    };

    let tau = 1.0;
    let mut it = Iterate {
        y: elim.y0.clone(),
        x: blocks.iter().map(|b| DMatrix::identity(b.size, b.size) * tau).collect(),
        z: blocks.iter().map(|b| DMatrix::identity(b.size, b.size) * tau).collect(),
    };

    let status;
    let mut iterations = 0;
    let (mut pinf, mut dinf, mut gap, mut pobj);
    let gamma = settings.step_fraction;

    loop {
        // residuals and objectives
        let sy: Vec<DMatrix<f64>> = blocks.iter().map(|b| b.eval(it.y.as_slice())).collect();
        let rp: Vec<DMatrix<f64>> = sy.iter().zip(&it.x).map(|(s, x)| s - x).collect();
        let mut fz = vec![0.0; n];
        for (b, z) in blocks.iter().zip(&it.z) {
            b.adjoint_into(z, &mut fz);
        }
        let fz = DVector::from_vec(fz);
        let rd_w = &cw - &nt * &fz;
        pobj = c.dot(&it.y);
        let dobj = cy0 - s0.iter().zip(&it.z).map(|(s, z)| inner(s, z)).sum::<f64>();
        pinf = rp.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt() / (1.0 + s0_norm);
        dinf = rd_w.norm() / (1.0 + cw.norm());
        gap = (pobj - dobj).abs() / (1.0f64).max(0.5 * (pobj.abs() + dobj.abs()));
        let mu = it.x.iter().zip(&it.z).map(|(x, z)| inner(x, z)).sum::<f64>() / ntot.max(1) as f64;

        if gap <= settings.gap_tol && pinf <= settings.feas_tol && dinf <= settings.feas_tol {
            status = SolveStatus::Optimal;
            break;
        }
        if iterations >= settings.max_iters {
            status = SolveStatus::MaxIters;
            break;
        }
        if it.y.amax() > DIVERGENCE {
            status = SolveStatus::UnboundedDetected;
            break;
        }
        if it.z.iter().map(|z| z.trace()).sum::<f64>() > DIVERGENCE {
            status = SolveStatus::InfeasibleDetected;
            break;
        }
        iterations += 1;

        // factorizations
        let mut xl = Vec::with_capacity(blocks.len());
        let mut xinv = Vec::with_capacity(blocks.len());
        let mut zl = Vec::with_capacity(blocks.len());
        let mut ok = true;
        for (x, z) in it.x.iter().zip(&it.z) {
            match (Cholesky::new(x.clone()), Cholesky::new(z.clone())) {
                (Some(cx), Some(cz)) => {
                    xinv.push(cx.inverse());
                    xl.push(cx.l());
                    zl.push(cz.l());
                }
                _ => ok = false,
            }
        }
        if !ok {
            status = SolveStatus::Stalled;
            break;
        }

        // Schur complement in w
        let mut by = DMatrix::zeros(n, n);
        for (k, b) in blocks.iter().enumerate() {
            b.schur_into(&xinv[k], &it.z[k], &mut by);
        }
        let bw = &nt * (&by * &elim.null);
        let bw = symmetrize(&bw);
        let chol = match Cholesky::new(bw.clone()) {
            Some(ch) => ch,
            None => {
                let reg = 1e-12 * bw.diagonal().amax().max(1e-300);
                let shifted = &bw + DMatrix::identity(bw.nrows(), bw.ncols()) * reg;
                match Cholesky::new(shifted) {
                    Some(ch) => ch,
                    None => {
                        status = SolveStatus::Stalled;
                        break;
                    }
                }
            }
        };

        // Newton direction for complementarity target rc (one matrix per block)
        let direction = |rc: &[DMatrix<f64>]| {
            let mut rhs = vec![0.0; n];
            for (k, b) in blocks.iter().enumerate() {
                let t = &xinv[k] * (&rc[k] - &rp[k] * &it.z[k]);
                b.adjoint_into(&symmetrize(&t), &mut rhs);
            }
            let rhs_w = &nt * (DVector::from_vec(rhs) + &fz - &c);
            let mut dw = chol.solve(&rhs_w);
            // one step of iterative refinement; the reduced Schur matrix is
            // badly conditioned close to the optimum
            let r = &rhs_w - &bw * &dw;
            dw += chol.solve(&r);
            let dy = &elim.null * dw;
            let mut dx = Vec::with_capacity(blocks.len());
            let mut dz = Vec::with_capacity(blocks.len());
            for (k, b) in blocks.iter().enumerate() {
                let dxk = b.linear(dy.as_slice()) + &rp[k];
                let dzk = symmetrize(&(&xinv[k] * (&rc[k] - &dxk * &it.z[k])));
                dx.push(dxk);
                dz.push(dzk);
            }
            let mut fdz = vec![0.0; n];
            for (b, m) in blocks.iter().zip(&dz) {
                b.adjoint_into(m, &mut fdz);
            }
            let miss = &rd_w - &nt * DVector::from_vec(fdz);
            let fix = &elim.null * gram_w.solve(&miss);
            for (k, b) in blocks.iter().enumerate() {
                dz[k] += b.linear(fix.as_slice());
            }
            (dy, dx, dz)
        };
        let steps = |dx: &[DMatrix<f64>], dz: &[DMatrix<f64>]| {
            let mut ap = f64::INFINITY;
            let mut ad = f64::INFINITY;
            for k in 0..blocks.len() {
                ap = ap.min(max_step(&xl[k], &dx[k]));
                ad = ad.min(max_step(&zl[k], &dz[k]));
            }
            (ap, ad)
        };

        // predictor
        let rc_aff: Vec<DMatrix<f64>> = it.x.iter().zip(&it.z).map(|(x, z)| -(x * z)).collect();
        let (_, dx_a, dz_a) = direction(&rc_aff);
        let (ap, ad) = steps(&dx_a, &dz_a);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mu_aff = it
            .x
            .iter()
            .zip(&it.z)
            .zip(dx_a.iter().zip(&dz_a))
            .map(|((x, z), (dx, dz))| inner(&(x + dx * ap), &(z + dz * ad)))
            .sum::<f64>()
            / ntot.max(1) as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // corrector
        let rc: Vec<DMatrix<f64>> = (0..blocks.len())
            .map(|k| {
                let s = it.x[k].nrows();
                DMatrix::identity(s, s) * (sigma * mu) - &it.x[k] * &it.z[k] - &dx_a[k] * &dz_a[k]
            })
            .collect();
        let (dy, dx, dz) = direction(&rc);
        let (ap, ad) = steps(&dx, &dz);
        let ap = (gamma * ap).min(1.0);
        let ad = (gamma * ad).min(1.0);
        if !(ap > 0.0 && ad > 0.0) || !dy.iter().all(|v| v.is_finite()) {
            status = SolveStatus::Stalled;
            break;
        }
        it.y += dy * ap;
        for k in 0..blocks.len() {
            it.x[k] += &dx[k] * ap;
            it.z[k] += &dz[k] * ad;
        }
    }

    let mut fz = vec![0.0; n];
    for (b, z) in blocks.iter().zip(&it.z) {
        b.adjoint_into(z, &mut fz);
    }
    let g = &c - DVector::from_vec(fz);
    let z = elim.multipliers(&g);
    let bz: f64 = inst.equalities.iter().zip(&z).map(|(r, zi)| r.rhs * zi).sum();
    let f0z: f64 = blocks.iter().zip(&it.z).map(|(b, zm)| inner(&b.f0, zm)).sum();
    Ok(SDPSolution {
        y: it.y.as_slice().to_vec(),
        z,
        gram: it.z,
        primal_obj: pobj + inst.cost_offset,
        dual_obj: bz - f0z + inst.cost_offset,
        status,
        iterations,
        primal_infeasibility: pinf,
        dual_infeasibility: dinf,
        relative_gap: gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relaxation::{BlockKind, EqualityRow, PsdBlock, RowKind};
    use crate::poly::MultiIndex;

    fn toy(equalities: Vec<EqualityRow>) -> SDPInstance {
        let p = crate::problem::parse_problem(
            r#"
[space]
time = "t"
states = [{ name = "x", box = [-1.0, 1.0] }]
[mode.a]
dynamics = ["0"]
lagrangian = "1"
[boundary]
horizon = { fixed = 1.0 }
initial = { fixed = [0.0] }
terminal = { fixed = [0.0] }
"#,
        )
        .unwrap();
        let layout = crate::relaxation::build_layout(&p, 1);
        // [[1, y1], [y1, y2]] >= 0 over variables 0 (fixed to 1), 1, 2
        let form = LinearMatrixForm {
            size: 2,
            constant: vec![],
            terms: vec![
                MatrixTerm { row: 0, col: 0, var: 0, coeff: 1.0 },
                MatrixTerm { row: 0, col: 1, var: 1, coeff: 1.0 },
                MatrixTerm { row: 1, col: 1, var: 2, coeff: 1.0 },
            ],
        };
        SDPInstance {
            layout,
            blocks: vec![PsdBlock {
                kind: BlockKind::Integral { constraint: 0 },
                form,
            }],
            equalities,
            cost: vec![(2, 1.0)],
            cost_offset: 0.0,
        }
    }

    fn unit_row(var: usize, rhs: f64) -> EqualityRow {
        EqualityRow {
            kind: RowKind::InitialMoment(MultiIndex::zero(1)),
            entries: vec![(var, 1.0)],
            rhs,
        }
    }

    #[test]
    fn psd_forces_square() {
        let mut rows = vec![unit_row(0, 1.0)];
        for k in 3..6 {
            rows.push(unit_row(k, 0.0));
        }
        let inst = toy(rows);
        let sol = solve(&inst, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.primal_obj.abs() < 1e-7, "{}", sol.primal_obj);
        assert!(sol.y[1].abs() < 1e-4 && sol.y[2].abs() < 1e-7);
        assert!(sol.dual_obj <= sol.primal_obj + 1e-8);
    }

    #[test]
    fn shifted_mean_gives_square_bound() {
        // y1 = 0.3 forces y2 >= 0.09
        let mut rows = vec![unit_row(0, 1.0), unit_row(1, 0.3)];
        for k in 3..6 {
            rows.push(unit_row(k, 0.0));
        }
        // a dependent duplicate row must be tolerated
        rows.push(unit_row(1, 0.3));
        let inst = toy(rows);
        let sol = solve(&inst, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.primal_obj - 0.09).abs() < 1e-7);
        assert!((sol.dual_obj - 0.09).abs() < 1e-6);
    }

    #[test]
    fn inconsistent_rows_are_reported() {
        let rows = vec![unit_row(0, 1.0), unit_row(0, 2.0)];
        assert!(solve(&toy(rows), &SolverSettings::default()).is_err());
    }
}
