//! Primal-dual interior-point method for `min c'x  s.t.  A x = b,  x >= 0`
//! (Mehrotra predictor-corrector on the normal equations).
//!
//! Unlike the simplex method it does not stop at a vertex: the iterates
//! follow the central path, whose limit lies in the relative interior of the
//! optimal face. On degenerate mesh LPs this spreads mass over equivalent
//! atoms instead of picking an arbitrary extreme one.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::{Error, Result};

/// Matrix-free access to an LP in standard form.
pub trait LpOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn costs(&self) -> Vec<f64>;
    fn rhs(&self) -> Vec<f64>;
    /// `out = A x`.
    fn mul(&self, x: &[f64], out: &mut [f64]);
    /// `out = A' y`.
    fn tmul(&self, y: &[f64], out: &mut [f64]);
    /// `A diag(d) A'`.
    fn normal(&self, d: &[f64]) -> DMatrix<f64>;
}

impl LpOperator for super::simplex::DenseLp {
    fn nrows(&self) -> usize {
        self.a.nrows()
    }
    fn ncols(&self) -> usize {
        self.a.ncols()
    }
    fn costs(&self) -> Vec<f64> {
        self.c.clone()
    }
    fn rhs(&self) -> Vec<f64> {
        self.b.clone()
    }
    fn mul(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice((&self.a * DVector::from_column_slice(x)).as_slice());
    }
    fn tmul(&self, y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(self.a.tr_mul(&DVector::from_column_slice(y)).as_slice());
    }
    fn normal(&self, d: &[f64]) -> DMatrix<f64> {
        let mut ad = self.a.clone();
        for (j, &dj) in d.iter().enumerate() {
            ad.column_mut(j).scale_mut(dj);
        }
        ad * self.a.transpose()
    }
}

#[derive(Clone, Debug)]
pub struct IpmSolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// Iterations without a better iterate before giving up.
const STALL_ITERS: usize = 5;
/// Near the optimum the normal equations lose accuracy; a best iterate within
/// this multiple of the tolerance is still returned.
const ACCEPT: f64 = 1e3;

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, &d)| d < 0.0)
        .map(|(&a, &d)| -a / d)
        .fold(f64::INFINITY, f64::min)
}

pub fn solve(op: &dyn LpOperator, tol: f64, max_iters: usize) -> Result<IpmSolution> {
    let m = op.nrows();
    let n = op.ncols();
    let b = op.rhs();
    let c = op.costs();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let cnorm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = vec![1.0; n];
    let mut s = vec![1.0; n];
    let mut y = vec![0.0; m];
    let mut ax = vec![0.0; m];
    let mut aty = vec![0.0; n];
    let mut tmp_m = vec![0.0; m];
    let mut tmp_n = vec![0.0; n];
    let mut best = (f64::INFINITY, 0, x.clone(), y.clone(), 0.0);
    for iter in 0..max_iters {
        op.mul(&x, &mut ax);
        op.tmul(&y, &mut aty);
        let rp: Vec<f64> = b.iter().zip(&ax).map(|(bi, a)| bi - a).collect();
        let rd: Vec<f64> = (0..n).map(|j| c[j] - aty[j] - s[j]).collect();
        let pobj: f64 = c.iter().zip(&x).map(|(a, b)| a * b).sum();
        let dobj: f64 = b.iter().zip(&y).map(|(a, b)| a * b).sum();
        let pinf = rp.iter().map(|v| v * v).sum::<f64>().sqrt() / (1.0 + bnorm);
        let dinf = rd.iter().map(|v| v * v).sum::<f64>().sqrt() / (1.0 + cnorm);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs());
        let merit = pinf.max(dinf).max(gap);
        if merit < best.0 {
            best = (merit, iter, x.clone(), y.clone(), pobj);
        }
        if merit <= tol || iter >= best.1 + STALL_ITERS {
            break;
        }
        let mu = x.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        let d: Vec<f64> = x.iter().zip(&s).map(|(a, b)| a / b).collect();
        let mut normal = op.normal(&d);
        let reg = 1e-13 * normal.diagonal().amax().max(1e-300);
        for i in 0..m {
            normal[(i, i)] += reg;
        }
        let Some(chol) = Cholesky::new(normal) else {
            break;
        };
        let mut direction = |rc: &[f64]| {
            // M dy = rp - A (rc / s) + A (D rd)
            for j in 0..n {
                tmp_n[j] = d[j] * rd[j] - rc[j] / s[j];
            }
            op.mul(&tmp_n, &mut tmp_m);
            let rhs = DVector::from_iterator(m, rp.iter().zip(&tmp_m).map(|(a, b)| a + b));
            let dy = chol.solve(&rhs);
            let mut atdy = vec![0.0; n];
            op.tmul(dy.as_slice(), &mut atdy);
            let ds: Vec<f64> = (0..n).map(|j| rd[j] - atdy[j]).collect();
            let dx: Vec<f64> = (0..n).map(|j| rc[j] / s[j] - d[j] * ds[j]).collect();
            (dx, dy, ds)
        };
        let rc_aff: Vec<f64> = x.iter().zip(&s).map(|(a, b)| -a * b).collect();
        let (dxa, _, dsa) = direction(&rc_aff);
        let ap = max_step(&x, &dxa).min(1.0);
        let ad = max_step(&s, &dsa).min(1.0);
        let mu_aff = (0..n).map(|j| (x[j] + ap * dxa[j]) * (s[j] + ad * dsa[j])).sum::<f64>() / n as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
        let rc: Vec<f64> = (0..n).map(|j| sigma * mu - x[j] * s[j] - dxa[j] * dsa[j]).collect();
        let (dx, dy, ds) = direction(&rc);
        let ap = (0.99 * max_step(&x, &dx)).min(1.0);
        let ad = (0.99 * max_step(&s, &ds)).min(1.0);
        if !(ap > 0.0 && ad > 0.0) {
            break;
        }
        for j in 0..n {
            x[j] += ap * dx[j];
            s[j] += ad * ds[j];
        }
        for i in 0..m {
            y[i] += ad * dy[i];
        }
    }
    let (merit, iterations, x, y, objective) = best;
    if merit > ACCEPT * tol {
        return Err(Error::Extraction(format!(
            "interior-point LP stopped at relative residual {merit:.1e} after {iterations} iterations"
        )));
    }
    Ok(IpmSolution { x, y, objective, iterations })
}

/// Newton decrement below which a stalled center search is accepted; it lies
/// in the region of quadratic convergence.
const STALL_LAMBDA: f64 = 0.1;

/// Maximizer of the concave `sum log(x + t dx)` over `t` in `(0, 1]`, kept
/// clear of the boundary.
fn line_search(x: &[f64], dx: &[f64]) -> f64 {
    let slope = |t: f64| x.iter().zip(dx).map(|(a, d)| d / (a + t * d)).sum::<f64>();
    let hi = (0.99 * max_step(x, dx)).min(1.0);
    if slope(hi) >= 0.0 {
        return hi;
    }
    let (mut lo, mut hi) = (0.0, hi);
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Analytic center `argmax sum log x  s.t.  A x = b` by damped Newton steps,
/// from a strictly positive `x0` with `A x0 = b` (up to rounding).
pub fn analytic_center(op: &dyn LpOperator, x0: Vec<f64>, tol: f64, max_iters: usize) -> Result<Vec<f64>> {
    let m = op.nrows();
    let n = op.ncols();
    let b = op.rhs();
    if x0.len() != n || x0.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Extraction("analytic center needs a strictly positive start".into()));
    }
    let mut x = x0;
    let mut ax = vec![0.0; m];
    let mut atnu = vec![0.0; n];
    for _ in 0..max_iters {
        // A X^2 A' nu = A x - r, dx = x - X^2 A' nu
        op.mul(&x, &mut ax);
        let d: Vec<f64> = x.iter().map(|v| v * v).collect();
        let mut normal = op.normal(&d);
        let reg = 1e-13 * normal.diagonal().amax().max(1e-300);
        for i in 0..m {
            normal[(i, i)] += reg;
        }
        let chol = Cholesky::new(normal)
            .ok_or_else(|| Error::Extraction("analytic center: singular normal equations".into()))?;
        let rhs = DVector::from_iterator(m, (0..m).map(|i| 2.0 * ax[i] - b[i]));
        let mut nu = chol.solve(&rhs);
        // refine against the operator itself, the factor is of a
        // regularized and badly scaled matrix
        let mut tmp = vec![0.0; m];
        for _ in 0..2 {
            op.tmul(nu.as_slice(), &mut atnu);
            let scaled: Vec<f64> = atnu.iter().zip(&d).map(|(a, w)| a * w).collect();
            op.mul(&scaled, &mut tmp);
            let r = DVector::from_iterator(m, (0..m).map(|i| rhs[i] - tmp[i]));
            nu += chol.solve(&r);
        }
        op.tmul(nu.as_slice(), &mut atnu);
        let dx: Vec<f64> = (0..n).map(|j| x[j] - d[j] * atnu[j]).collect();
        let lambda = dx.iter().zip(&x).map(|(a, b)| (a / b).powi(2)).sum::<f64>().sqrt();
        if lambda <= tol {
            return Ok(x);
        }
        let t = line_search(&x, &dx);
        if t < 1e-12 {
            // rounding limits the direction; close enough to the center
            if lambda <= STALL_LAMBDA {
                return Ok(x);
            }
            return Err(Error::Extraction(format!(
                "analytic center stalled with Newton decrement {lambda:.1e}"
            )));
        }
        for j in 0..n {
            x[j] += t * dx[j];
        }
    }
    Err(Error::Extraction(format!(
        "analytic center did not converge in {max_iters} Newton steps"
    )))
}
