//! Revised primal simplex with a dense basis inverse.
//!
//! Columns come from a [`ColumnSource`], so large column sets (one per mesh
//! atom) never need to be stored. Pricing is Dantzig's rule; after a run of
//! degenerate pivots it switches to Bland's rule for good, which rules out
//! cycling. The caller supplies a feasible starting basis.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

const PIVOT_TOL: f64 = 1e-7;
const REFACTOR_EVERY: usize = 64;
const DEGENERATE_RUN: usize = 50;

pub trait ColumnSource {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn cost(&self, j: usize) -> f64;
    /// Dense column `j` written into `out` (length `nrows`).
    fn column(&self, j: usize, out: &mut [f64]);
    /// `c_j - a_j' duals` for every column.
    fn reduced_costs(&self, duals: &[f64], out: &mut [f64]) {
        let mut col = vec![0.0; self.nrows()];
        for (j, o) in out.iter_mut().enumerate() {
            self.column(j, &mut col);
            *o = self.cost(j) - col.iter().zip(duals).map(|(a, p)| a * p).sum::<f64>();
        }
    }
}

/// Small explicit LP `min c'x  s.t.  A x = b,  x >= 0`.
#[derive(Clone, Debug)]
pub struct DenseLp {
    pub a: DMatrix<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl ColumnSource for DenseLp {
    fn nrows(&self) -> usize {
        self.a.nrows()
    }
    fn ncols(&self) -> usize {
        self.a.ncols()
    }
    fn cost(&self, j: usize) -> f64 {
        self.c[j]
    }
    fn column(&self, j: usize, out: &mut [f64]) {
        out.copy_from_slice(self.a.column(j).as_slice());
    }
}

#[derive(Clone, Debug)]
pub struct SimplexSolution {
    /// Basic columns and their values.
    pub basis: Vec<usize>,
    pub values: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

impl SimplexSolution {
    /// Full solution vector of length `ncols`.
    pub fn dense(&self, ncols: usize) -> Vec<f64> {
        let mut x = vec![0.0; ncols];
        for (&j, &v) in self.basis.iter().zip(&self.values) {
            x[j] = v.max(0.0);
        }
        x
    }
}

fn basis_inverse(src: &dyn ColumnSource, basis: &[usize]) -> Result<DMatrix<f64>> {
    let m = src.nrows();
    let mut bmat = DMatrix::zeros(m, m);
    let mut col = vec![0.0; m];
    for (k, &j) in basis.iter().enumerate() {
        src.column(j, &mut col);
        bmat.column_mut(k).copy_from_slice(&col);
    }
    bmat.try_inverse()
        .ok_or_else(|| Error::Extraction("simplex basis became singular".into()))
}

/// Solves `min c'x  s.t.  A x = b,  x >= 0` from the feasible basis `start`.
pub fn solve(src: &dyn ColumnSource, b: &[f64], start: Vec<usize>, max_iters: usize) -> Result<SimplexSolution> {
    let m = src.nrows();
    let n = src.ncols();
    if start.len() != m || b.len() != m {
        return Err(Error::Extraction(format!(
            "simplex needs {m} basic columns and right-hand sides"
        )));
    }
    let bvec = DVector::from_column_slice(b);
    let mut basis = start;
    let mut binv = basis_inverse(src, &basis)?;
    let mut xb = &binv * &bvec;
    if xb.iter().any(|&v| v < -1e-7) {
        return Err(Error::Extraction("starting basis is not feasible".into()));
    }
    let mut d = vec![0.0; n];
    let mut col = vec![0.0; m];
    let mut bland = false;
    let mut degenerate = 0;
    for iter in 0..max_iters {
        if iter > 0 && iter % REFACTOR_EVERY == 0 {
            binv = basis_inverse(src, &basis)?;
            xb = &binv * &bvec;
        }
        let cb = DVector::from_iterator(m, basis.iter().map(|&j| src.cost(j)));
        let duals = binv.tr_mul(&cb);
        src.reduced_costs(duals.as_slice(), &mut d);
        for &j in &basis {
            d[j] = 0.0;
        }
        let entering = if bland {
            (0..n).find(|&j| d[j] < -PIVOT_TOL)
        } else {
            let mut best = None;
            let mut best_d = -PIVOT_TOL;
            for (j, &dj) in d.iter().enumerate() {
                if dj < best_d {
                    best_d = dj;
                    best = Some(j);
                }
            }
            best
        };
        let Some(q) = entering else {
            let objective = basis.iter().zip(xb.iter()).map(|(&j, &v)| src.cost(j) * v).sum();
            return Ok(SimplexSolution {
                basis,
                values: xb.as_slice().to_vec(),
                objective,
                iterations: iter,
            });
        };
        src.column(q, &mut col);
        let u = &binv * DVector::from_column_slice(&col);
        let mut leave: Option<(usize, f64)> = None;
        let tol = PIVOT_TOL * u.amax().max(1.0);
        for i in 0..m {
            if u[i] > tol {
                let ratio = xb[i].max(0.0) / u[i];
                let better = match leave {
                    None => true,
                    Some((l, r)) => ratio < r - 1e-12 || (ratio <= r + 1e-12 && basis[i] < basis[l]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((l, step)) = leave else {
            return Err(Error::Extraction("extraction LP is unbounded".into()));
        };
        if step <= 1e-12 {
            degenerate += 1;
            if degenerate >= DEGENERATE_RUN {
                bland = true;
            }
        } else {
            degenerate = 0;
        }
        // pivot on u[l]
        xb.axpy(-step, &u, 1.0);
        xb[l] = step;
        let pivot = u[l];
        let row_l = binv.row(l) / pivot;
        for i in 0..m {
            if i != l && u[i] != 0.0 {
                let f = u[i];
                for c in 0..m {
                    binv[(i, c)] -= f * row_l[c];
                }
            }
        }
        binv.set_row(l, &row_l);
        basis[l] = q;
    }
    Err(Error::Extraction(format!(
        "simplex did not finish within {max_iters} pivots"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_variable_vertex() {
        // max x + y s.t. x + 2y <= 4, 3x + y <= 6  ->  (8/5, 6/5)
        let lp = DenseLp {
            a: DMatrix::from_row_slice(2, 4, &[1.0, 2.0, 1.0, 0.0, 3.0, 1.0, 0.0, 1.0]),
            b: vec![4.0, 6.0],
            c: vec![-1.0, -1.0, 0.0, 0.0],
        };
        let sol = solve(&lp, &lp.b, vec![2, 3], 100).unwrap();
        let x = sol.dense(4);
        assert!((x[0] - 1.6).abs() < 1e-12 && (x[1] - 1.2).abs() < 1e-12);
        assert!((sol.objective + 2.8).abs() < 1e-12);
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let lp = DenseLp {
            a: DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
            b: vec![1.0],
            c: vec![0.0, 0.0],
        };
        assert!(solve(&lp, &lp.b, vec![1], 10).is_err());
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Beale's cycling example in standard form.
        let lp = DenseLp {
            a: DMatrix::from_row_slice(
                3,
                7,
                &[
                    0.25, -8.0, -1.0, 9.0, 1.0, 0.0, 0.0, //
                    0.5, -12.0, -0.5, 3.0, 0.0, 1.0, 0.0, //
                    0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0,
                ],
            ),
            b: vec![0.0, 0.0, 1.0],
            c: vec![-0.75, 20.0, -0.5, 6.0, 0.0, 0.0, 0.0],
        };
        let sol = solve(&lp, &lp.b, vec![4, 5, 6], 1000).unwrap();
        assert!((sol.objective + 1.25).abs() < 1e-9);
    }
}
