//! Approximate optimal trajectories from the modal moments.
//!
//! Each modal measure is approximated by weighted atoms on a mesh of the
//! scaled `(t, x)` box. The weights of all modes are coupled by the time
//! marginals (the modal measures must add up to Lebesgue measure in time) and
//! chosen to minimize the l1 mismatch with the computed moments. Per-cell
//! conditional means then give way points and duty cycles.
//!
//! With several states the mesh is the tensor grid of per-dimension nodes and
//! the way point is the componentwise conditional mean. With a free horizon
//! the time marginals become upper bounds and the horizon estimate is the
//! total mass.

mod grid;
pub mod lpipm;
pub mod simplex;
mod simulate;

pub use simulate::{simulate_relaxed, DutySchedule, Trajectory};

use std::io::Write;

use std::collections::HashMap;

use grid::GridEvaluator;
use lpipm::LpOperator;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use simplex::ColumnSource;

use crate::poly::{monomials_up_to, MultiIndex};
use crate::problem::{Scaling, SwitchedProblem};
use crate::relaxation::{MeasureLayout, MeasureRole};
use crate::{Error, Result};

/// Tensor mesh of a scaled problem: time cells and per-state nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    /// Cell boundaries, increasing; cell `i` is `[bounds[i], bounds[i + 1]]`.
    pub bounds: Vec<f64>,
    /// Cell midpoints, the time coordinate of the atoms.
    pub centers: Vec<f64>,
    /// Cell lengths.
    pub dt: Vec<f64>,
    /// Nodes of each state dimension.
    pub nodes: Vec<Vec<f64>>,
    /// Resolution as a fraction of each variable's range.
    pub eps: f64,
    /// Whether atom `(cell, node)` may carry mass, `ncells * nnodes` entries.
    pub admissible: Vec<bool>,
}

impl Mesh {
    /// Uniform mesh with spacing `eps * range` in every scaled variable: time
    /// cells of length `eps * (t1 - t0)` and nodes spanning `[-1, 1]` in steps
    /// of `2 eps`, so each point of the box is within `eps` of a node.
    pub fn uniform(t0: f64, t1: f64, nstates: usize, eps: f64) -> Result<Mesh> {
        if !(eps > 0.0 && eps <= 1.0) || !(t1 > t0) {
            return Err(Error::Extraction(format!(
                "invalid mesh: eps {eps}, time window [{t0}, {t1}]"
            )));
        }
        let ncells = (1.0 / eps - 1e-9).ceil() as usize;
        let h = (t1 - t0) / ncells as f64;
        let bounds: Vec<f64> = (0..=ncells).map(|i| t0 + h * i as f64).collect();
        let centers = bounds.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let dt = vec![h; ncells];
        let nn = ncells + 1;
        let line: Vec<f64> = (0..nn).map(|k| -1.0 + 2.0 * k as f64 / ncells as f64).collect();
        let nodes = vec![line; nstates];
        let total = ncells * nn.pow(nstates as u32);
        Ok(Mesh {
            bounds,
            centers,
            dt,
            nodes,
            eps,
            admissible: vec![true; total],
        })
    }

    /// Mesh of a scaled problem's time window, with atoms outside the shared
    /// set (constraints in time and states only) marked inadmissible.
    pub fn for_problem(p: &SwitchedProblem, eps: f64) -> Result<Mesh> {
        let w = p.time_window();
        let mut mesh = Mesh::uniform(w.lo, w.hi, p.nstates(), eps)?;
        let dynamic = p.dynamic_vars();
        let gs: Vec<_> = p
            .shared_set
            .inequalities
            .iter()
            .filter(|g| g.involves_only(&dynamic))
            .collect();
        let nnodes = mesh.nnodes();
        for i in 0..mesh.ncells() {
            for k in 0..nnodes {
                let x = mesh.node(k);
                let z = p.point(mesh.centers[i], &x);
                let scale = |g: &crate::poly::Polynomial| g.max_abs_coeff().max(1e-300);
                mesh.admissible[i * nnodes + k] = gs.iter().all(|g| g.eval(&z) >= -1e-9 * scale(g));
            }
        }
        Ok(mesh)
    }

    pub fn ncells(&self) -> usize {
        self.centers.len()
    }

    pub fn nnodes(&self) -> usize {
        self.nodes.iter().map(|n| n.len()).product()
    }

    /// State coordinates of flat node index `k` (last dimension fastest).
    pub fn node(&self, mut k: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.nodes.len()];
        for d in (0..self.nodes.len()).rev() {
            let n = self.nodes[d].len();
            x[d] = self.nodes[d][k % n];
            k /= n;
        }
        x
    }
}

/// Truncated moments of each modal measure's `(t, x)` marginal.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalMoments {
    /// Exponents over `(t, x_1, ..., x_n)`, graded-lex.
    pub exponents: Vec<Vec<u32>>,
    /// `values[j][k]` is the moment of `exponents[k]` for mode `j`.
    pub values: Vec<Vec<f64>>,
}

impl ModalMoments {
    /// Moments up to degree `2r` read from a moment vector of the layout.
    pub fn from_solution(p: &SwitchedProblem, layout: &MeasureLayout, y: &[f64], r: u32) -> Result<Self> {
        if r == 0 {
            return Err(Error::Extraction("extraction degree r must be at least 1".into()));
        }
        if r > layout.order {
            return Err(Error::Extraction(format!(
                "degree 2r = {} exceeds the available moments of order {}",
                2 * r,
                layout.order
            )));
        }
        let dynamic = p.dynamic_vars();
        let nvars = p.space.len();
        let exponents: Vec<Vec<u32>> = monomials_up_to(dynamic.len(), 2 * r)
            .iter()
            .map(|k| k.exponents().to_vec())
            .collect();
        let mut values = Vec::with_capacity(p.modes.len());
        for j in 0..p.modes.len() {
            let mi = layout
                .find(MeasureRole::Modal(j))
                .ok_or_else(|| Error::Extraction(format!("no measure for mode {}", j + 1)))?;
            let meas = &layout.measures[mi];
            let mut v = Vec::with_capacity(exponents.len());
            for e in &exponents {
                let mut full = vec![0; nvars];
                for (k, &var) in dynamic.iter().enumerate() {
                    full[var] = e[k];
                }
                let pos = meas.position(&MultiIndex::new(full)).ok_or_else(|| {
                    Error::Extraction(format!("moment {e:?} of mode {} is not available", j + 1))
                })?;
                v.push(y[pos]);
            }
            values.push(v);
        }
        Ok(ModalMoments { exponents, values })
    }
}

/// Coupled mesh LP
///
/// `min sum |s_{j,a}|  s.t.  sum_{atoms} w_j(t_i, x_k) t_i^a0 x_k^a' + s_{j,a} = y_{j,a}`,
/// `sum_j sum_k w_j(t_i, x_k) = dt_i` (`<=` with a free horizon), `w >= 0`.
///
/// Columns: atoms (mode-major, then admissible `(cell, node)` pairs), positive
/// and negative mismatch slacks, then one marginal slack per cell when the
/// horizon is free. Rows: moment rows (mode-major) then one marginal row per
/// cell.
#[derive(Clone, Debug)]
pub struct ExtractionLp {
    pub mesh: Mesh,
    pub moments: ModalMoments,
    pub free_horizon: bool,
    atoms: Vec<(usize, usize)>,
    evaluator: GridEvaluator,
    /// `tpow[i][e]`: average of `t^e` over time cell `i`.
    tpow: Vec<Vec<f64>>,
    /// State monomials of products of two moment monomials, for `A D A'`.
    xevaluator: GridEvaluator,
    /// `xpairs[a * nmom + b]` indexes the state part of monomials `a` times `b`.
    xpairs: Vec<usize>,
    rhs: Vec<f64>,
}

pub fn build_extraction_lp(moments: &ModalMoments, mesh: &Mesh, free_horizon: bool) -> Result<ExtractionLp> {
    let dims = mesh.nodes.len() + 1;
    if moments.exponents.iter().any(|e| e.len() != dims) {
        return Err(Error::Extraction(format!(
            "moment exponents do not match the {dims}-dimensional mesh"
        )));
    }
    if mesh.ncells() == 0 || moments.values.is_empty() {
        return Err(Error::Extraction("empty mesh or no modes".into()));
    }
    let nnodes = mesh.nnodes();
    let atoms: Vec<(usize, usize)> = (0..mesh.ncells())
        .flat_map(|i| (0..nnodes).map(move |k| (i, k)))
        .filter(|&(i, k)| mesh.admissible[i * nnodes + k])
        .collect();
    for i in 0..mesh.ncells() {
        if !atoms.iter().any(|a| a.0 == i) {
            return Err(Error::Extraction(format!("time cell {i} has no admissible node")));
        }
    }
    // an atom spreads its mass uniformly over its time cell, as the time
    // marginal of the modal measures is Lebesgue
    let deg = moments.exponents.iter().map(|e| e[0]).max().unwrap_or(0) as usize;
    let tpow: Vec<Vec<f64>> = mesh
        .bounds
        .windows(2)
        .map(|w| {
            (0..=deg)
                .map(|e| {
                    let p = e as i32 + 1;
                    (w[1].powi(p) - w[0].powi(p)) / (p as f64 * (w[1] - w[0]))
                })
                .collect()
        })
        .collect();
    let mut grids = vec![mesh.centers.clone()];
    grids.extend(mesh.nodes.iter().cloned());
    let evaluator = GridEvaluator::new(&moments.exponents, &grids).with_powers(0, tpow.clone());
    let mut xexps: Vec<Vec<u32>> = Vec::new();
    let mut index: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut xpairs = Vec::with_capacity(moments.exponents.len().pow(2));
    for a in &moments.exponents {
        for b in &moments.exponents {
            let mut e: Vec<u32> = a.iter().zip(b).map(|(x, y)| x + y).collect();
            e[0] = 0;
            let next = xexps.len();
            let k = *index.entry(e.clone()).or_insert_with(|| {
                xexps.push(e);
                next
            });
            xpairs.push(k);
        }
    }
    let xevaluator = GridEvaluator::new(&xexps, &grids);
    let mut rhs: Vec<f64> = moments.values.iter().flatten().copied().collect();
    rhs.extend(&mesh.dt);
    Ok(ExtractionLp {
        mesh: mesh.clone(),
        moments: moments.clone(),
        free_horizon,
        atoms,
        evaluator,
        tpow,
        xevaluator,
        xpairs,
        rhs,
    })
}

impl ExtractionLp {
    fn nmodes(&self) -> usize {
        self.moments.values.len()
    }
    fn nmom(&self) -> usize {
        self.moments.exponents.len()
    }
    fn natoms(&self) -> usize {
        self.atoms.len() * self.nmodes()
    }
    fn nmoment_rows(&self) -> usize {
        self.nmodes() * self.nmom()
    }

}

impl ColumnSource for ExtractionLp {
    fn nrows(&self) -> usize {
        self.nmoment_rows() + self.mesh.ncells()
    }

    fn ncols(&self) -> usize {
        self.natoms() + 2 * self.nmoment_rows() + if self.free_horizon { self.mesh.ncells() } else { 0 }
    }

    fn cost(&self, j: usize) -> f64 {
        let a = self.natoms();
        if j >= a && j < a + 2 * self.nmoment_rows() {
            1.0
        } else {
            0.0
        }
    }

    fn column(&self, j: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let na = self.natoms();
        let nr = self.nmoment_rows();
        if j < na {
            let mode = j / self.atoms.len();
            let a = j % self.atoms.len();
            let (i, k) = self.atoms[a];
            let x = self.mesh.node(k);
            let base = mode * self.nmom();
            for (r, e) in self.moments.exponents.iter().enumerate() {
                let mut v = self.tpow[i][e[0] as usize];
                for (d, &xd) in x.iter().enumerate() {
                    v *= xd.powi(e[d + 1] as i32);
                }
                out[base + r] = v;
            }
            out[nr + self.atoms[a].0] = 1.0;
        } else if j < na + nr {
            out[j - na] = 1.0;
        } else if j < na + 2 * nr {
            out[j - na - nr] = -1.0;
        } else {
            out[nr + (j - na - 2 * nr)] = 1.0;
        }
    }

    fn reduced_costs(&self, duals: &[f64], out: &mut [f64]) {
        let na = self.natoms();
        let nr = self.nmoment_rows();
        let nnodes = self.mesh.nnodes();
        let mut vals = vec![0.0; self.evaluator.grid_len()];
        for mode in 0..self.nmodes() {
            let pi = &duals[mode * self.nmom()..(mode + 1) * self.nmom()];
            self.evaluator.eval(pi, &mut vals);
            let base = mode * self.atoms.len();
            for (a, &(i, k)) in self.atoms.iter().enumerate() {
                out[base + a] = -(vals[i * nnodes + k] + duals[nr + i]);
            }
        }
        for r in 0..nr {
            out[na + r] = 1.0 - duals[r];
            out[na + nr + r] = 1.0 + duals[r];
        }
        if self.free_horizon {
            for i in 0..self.mesh.ncells() {
                out[na + 2 * nr + i] = -duals[nr + i];
            }
        }
    }
}

impl ExtractionLp {
    /// Atom part of `x` for one mode as a full-grid tensor.
    fn mode_tensor(&self, mode: usize, x: &[f64]) -> Vec<f64> {
        let nnodes = self.mesh.nnodes();
        let mut w = vec![0.0; self.mesh.ncells() * nnodes];
        let base = mode * self.atoms.len();
        for (a, &(i, k)) in self.atoms.iter().enumerate() {
            w[i * nnodes + k] = x[base + a];
        }
        w
    }
}

impl LpOperator for ExtractionLp {
    fn nrows(&self) -> usize {
        ColumnSource::nrows(self)
    }

    fn ncols(&self) -> usize {
        ColumnSource::ncols(self)
    }

    fn costs(&self) -> Vec<f64> {
        (0..ColumnSource::ncols(self)).map(|j| self.cost(j)).collect()
    }

    fn rhs(&self) -> Vec<f64> {
        self.rhs.clone()
    }

    fn mul(&self, x: &[f64], out: &mut [f64]) {
        let na = self.natoms();
        let nr = self.nmoment_rows();
        let nmom = self.nmom();
        let ncells = self.mesh.ncells();
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut mom = vec![0.0; nmom];
        for mode in 0..self.nmodes() {
            let w = self.mode_tensor(mode, x);
            self.evaluator.moments(&w, &mut mom);
            out[mode * nmom..(mode + 1) * nmom].copy_from_slice(&mom);
            let base = mode * self.atoms.len();
            for (a, &(i, _)) in self.atoms.iter().enumerate() {
                out[nr + i] += x[base + a];
            }
        }
        for r in 0..nr {
            out[r] += x[na + r] - x[na + nr + r];
        }
        if self.free_horizon {
            for i in 0..ncells {
                out[nr + i] += x[na + 2 * nr + i];
            }
        }
    }

    fn tmul(&self, y: &[f64], out: &mut [f64]) {
        // reduced costs are c - A'y and c is known
        ColumnSource::reduced_costs(self, y, out);
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.cost(j) - *o;
        }
    }

    fn normal(&self, d: &[f64]) -> DMatrix<f64> {
        let na = self.natoms();
        let nr = self.nmoment_rows();
        let nmom = self.nmom();
        let ncells = self.mesh.ncells();
        let m = nr + ncells;
        let mut out = DMatrix::zeros(m, m);
        let nx = self.xpairs.iter().max().map_or(0, |k| k + 1);
        let mut xslices = vec![0.0; ncells * nx];
        let mut slices = vec![0.0; ncells * nmom];
        let texp: Vec<usize> = self.moments.exponents.iter().map(|e| e[0] as usize).collect();
        for mode in 0..self.nmodes() {
            let w = self.mode_tensor(mode, d);
            self.xevaluator.slice_moments(&w, &mut xslices);
            let off = mode * nmom;
            for i in 0..ncells {
                let tp = &self.tpow[i];
                let xs = &xslices[i * nx..(i + 1) * nx];
                for a in 0..nmom {
                    let ta = tp[texp[a]];
                    for b in a..nmom {
                        out[(off + a, off + b)] += ta * tp[texp[b]] * xs[self.xpairs[a * nmom + b]];
                    }
                }
            }
            for a in 0..nmom {
                for b in a + 1..nmom {
                    out[(off + b, off + a)] = out[(off + a, off + b)];
                }
            }
            self.evaluator.slice_moments(&w, &mut slices);
            for i in 0..ncells {
                for a in 0..nmom {
                    let v = slices[i * nmom + a];
                    out[(off + a, nr + i)] = v;
                    out[(nr + i, off + a)] = v;
                }
            }
            let base = mode * self.atoms.len();
            for (a, &(i, _)) in self.atoms.iter().enumerate() {
                out[(nr + i, nr + i)] += d[base + a];
            }
        }
        for r in 0..nr {
            out[(r, r)] += d[na + r] + d[na + nr + r];
        }
        if self.free_horizon {
            for i in 0..ncells {
                out[(nr + i, nr + i)] += d[na + 2 * nr + i];
            }
        }
        out
    }
}

/// How the mesh LP is solved.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpMethod {
    /// Analytic center of the weights whose mismatch is within
    /// [`CENTER_SLACK`] of the optimum. Duty cycles vary smoothly between
    /// cells instead of fitting moment noise with bang-bang patterns.
    #[default]
    Centered,
    /// Interior point; ends in the relative interior of the optimal face.
    InteriorPoint,
    /// Revised simplex; ends at an optimal vertex.
    Simplex,
}

/// Relative mismatch allowance of [`LpMethod::Centered`].
pub const CENTER_SLACK: f64 = 1.0;

/// The mesh LP with a zero cost and one more row: the mismatch slacks plus a
/// new slack column add up to `bound`.
struct BoundedMismatch<'a> {
    lp: &'a ExtractionLp,
    bound: f64,
}

impl BoundedMismatch<'_> {
    fn slack_range(&self) -> std::ops::Range<usize> {
        let na = self.lp.natoms();
        na..na + 2 * self.lp.nmoment_rows()
    }
}

impl LpOperator for BoundedMismatch<'_> {
    fn nrows(&self) -> usize {
        ColumnSource::nrows(self.lp) + 1
    }

    fn ncols(&self) -> usize {
        ColumnSource::ncols(self.lp) + 1
    }

    fn costs(&self) -> Vec<f64> {
        vec![0.0; LpOperator::ncols(self)]
    }

    fn rhs(&self) -> Vec<f64> {
        let mut b = self.lp.rhs.clone();
        b.push(self.bound);
        b
    }

    fn mul(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len() - 1;
        let m = out.len() - 1;
        self.lp.mul(&x[..n], &mut out[..m]);
        out[m] = x[self.slack_range()].iter().sum::<f64>() + x[n];
    }

    fn tmul(&self, y: &[f64], out: &mut [f64]) {
        let n = out.len() - 1;
        let m = y.len() - 1;
        self.lp.tmul(&y[..m], &mut out[..n]);
        for j in self.slack_range() {
            out[j] += y[m];
        }
        out[n] = y[m];
    }

    fn normal(&self, d: &[f64]) -> DMatrix<f64> {
        let n = d.len() - 1;
        let inner = self.lp.normal(&d[..n]);
        let m = inner.nrows();
        let mut out = DMatrix::zeros(m + 1, m + 1);
        out.view_mut((0, 0), (m, m)).copy_from(&inner);
        let na = self.lp.natoms();
        let nr = self.lp.nmoment_rows();
        for r in 0..nr {
            let v = d[na + r] - d[na + nr + r];
            out[(r, m)] = v;
            out[(m, r)] = v;
        }
        out[(m, m)] = d[self.slack_range()].iter().sum::<f64>() + d[n];
        out
    }
}

fn measure_set(lp: &ExtractionLp, x: &[f64], iterations: usize) -> DiscreteMeasureSet {
    let na = lp.natoms();
    let floor = 1e-10 * lp.mesh.dt.iter().copied().fold(0.0, f64::max);
    let mut atoms = Vec::new();
    for (j, &v) in x[..na].iter().enumerate() {
        if v > floor {
            let mode = j / lp.atoms.len();
            let (i, k) = lp.atoms[j % lp.atoms.len()];
            atoms.push((mode, i, k, v));
        }
    }
    atoms.sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));
    // mismatch of the atoms alone, not of the slacks
    let mut w = x[..LpOperator::ncols(lp)].to_vec();
    w[na..na + 2 * lp.nmoment_rows()].iter_mut().for_each(|v| *v = 0.0);
    let mut aw = vec![0.0; ColumnSource::nrows(lp)];
    lp.mul(&w, &mut aw);
    let mismatch = (0..lp.nmoment_rows()).map(|r| (lp.rhs[r] - aw[r]).abs()).sum();
    DiscreteMeasureSet {
        atoms,
        nmodes: lp.nmodes(),
        mismatch,
        iterations,
    }
}

/// Atom weights of each mode, nonzero entries only.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasureSet {
    /// `(mode, cell, flat node index, weight)`.
    pub atoms: Vec<(usize, usize, usize, f64)>,
    pub nmodes: usize,
    /// Optimal l1 moment mismatch.
    pub mismatch: f64,
    pub iterations: usize,
}

impl DiscreteMeasureSet {
    /// Mass of each time cell summed over modes.
    pub fn cell_mass(&self, ncells: usize) -> Vec<f64> {
        let mut m = vec![0.0; ncells];
        for &(_, i, _, w) in &self.atoms {
            m[i] += w;
        }
        m
    }
}

/// Solves the mesh LP with the default method.
pub fn solve_lp(lp: &ExtractionLp) -> Result<DiscreteMeasureSet> {
    solve_lp_with(lp, LpMethod::default())
}

pub fn solve_lp_with(lp: &ExtractionLp, method: LpMethod) -> Result<DiscreteMeasureSet> {
    match method {
        LpMethod::Simplex => solve_lp_simplex(lp),
        LpMethod::InteriorPoint => {
            let sol = lpipm::solve(lp, 1e-8, 300)?;
            Ok(measure_set(lp, &sol.x, sol.iterations))
        }
        LpMethod::Centered => {
            let sol = lpipm::solve(lp, 1e-8, 300)?;
            let scale = 1.0 + lp.rhs.iter().map(|v| v.abs()).sum::<f64>();
            let bound = (1.0 + CENTER_SLACK) * sol.objective.max(0.0) + 1e-8 * scale;
            let op = BoundedMismatch { lp, bound };
            // strictly positive start: the optimum mixed with a uniform
            // spread, little enough of it to stay below the bound
            let u = uniform_point(lp);
            let used_u: f64 = u[op.slack_range()].iter().sum();
            let used_opt: f64 = sol.x[op.slack_range()].iter().sum();
            let theta = if used_u > used_opt {
                (0.5 * (bound - used_opt) / (used_u - used_opt)).min(0.5)
            } else {
                0.5
            };
            let mut x0: Vec<f64> = sol.x.iter().zip(&u).map(|(a, u)| (1.0 - theta) * a.max(0.0) + theta * u).collect();
            let used: f64 = x0[op.slack_range()].iter().sum();
            x0.push(bound - used);
            let x = lpipm::analytic_center(&op, x0, 1e-7, 200)?;
            Ok(measure_set(lp, &x, sol.iterations))
        }
    }
}

/// Strictly positive feasible point: every cell's mass spread evenly over
/// its admissible atoms (half of it with a free horizon), mismatch taken up by
/// the slacks.
fn uniform_point(lp: &ExtractionLp) -> Vec<f64> {
    let na = lp.natoms();
    let nr = lp.nmoment_rows();
    let nmodes = lp.nmodes();
    let ncells = lp.mesh.ncells();
    let mut x = vec![0.0; LpOperator::ncols(lp)];
    let mut count = vec![0usize; ncells];
    for &(i, _) in &lp.atoms {
        count[i] += 1;
    }
    let share = if lp.free_horizon { 0.5 } else { 1.0 };
    for mode in 0..nmodes {
        for (a, &(i, _)) in lp.atoms.iter().enumerate() {
            x[mode * lp.atoms.len() + a] = share * lp.mesh.dt[i] / (nmodes * count[i]) as f64;
        }
    }
    if lp.free_horizon {
        for i in 0..ncells {
            x[na + 2 * nr + i] = (1.0 - share) * lp.mesh.dt[i];
        }
    }
    let mut ax = vec![0.0; ColumnSource::nrows(lp)];
    lp.mul(&x, &mut ax);
    let delta = 1e-6 * (1.0 + lp.rhs[..nr].iter().map(|v| v.abs()).fold(0.0, f64::max));
    for r in 0..nr {
        let res = lp.rhs[r] - ax[r];
        x[na + r] = res.max(0.0) + delta;
        x[na + nr + r] = (-res).max(0.0) + delta;
    }
    x
}

/// Simplex from a basis of one atom per cell (or the marginal slacks with a
/// free horizon) plus one mismatch slack per moment row.
fn solve_lp_simplex(lp: &ExtractionLp) -> Result<DiscreteMeasureSet> {
    let na = lp.natoms();
    let nr = lp.nmoment_rows();
    let ncells = lp.mesh.ncells();
    let mut resid = lp.rhs[..nr].to_vec();
    let mut basis = Vec::with_capacity(nr + ncells);
    let mut cell_cols = Vec::with_capacity(ncells);
    let mut col = vec![0.0; ColumnSource::nrows(lp)];
    for i in 0..ncells {
        if lp.free_horizon {
            cell_cols.push(na + 2 * nr + i);
            continue;
        }
        let a = lp.atoms.iter().position(|x| x.0 == i).expect("checked when built");
        lp.column(a, &mut col);
        for r in 0..nr {
            resid[r] -= lp.mesh.dt[i] * col[r];
        }
        cell_cols.push(a);
    }
    for (r, &v) in resid.iter().enumerate() {
        basis.push(if v >= 0.0 { na + r } else { na + nr + r });
    }
    basis.extend(cell_cols);
    let sol = simplex::solve(lp, &lp.rhs, basis, 200_000)?;
    let mut atoms = Vec::new();
    for (&j, &v) in sol.basis.iter().zip(&sol.values) {
        if j < na && v > 0.0 {
            let mode = j / lp.atoms.len();
            let (i, k) = lp.atoms[j % lp.atoms.len()];
            atoms.push((mode, i, k, v));
        }
    }
    atoms.sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));
    Ok(DiscreteMeasureSet {
        atoms,
        nmodes: lp.nmodes(),
        mismatch: sol.objective,
        iterations: sol.iterations,
    })
}

/// Way points and duty cycles per time cell.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtractionResult {
    /// Cell midpoints of the cells that carry mass.
    pub times: Vec<f64>,
    /// Cell boundaries `[times.len() + 1]`.
    pub bounds: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `duty[i][j]`, summing to one over `j`.
    pub duty: Vec<Vec<f64>>,
    pub mismatch: f64,
    /// End of the last cell carrying mass (the horizon estimate).
    pub horizon: f64,
}

/// Conditional means per cell: `x*(t_i) = sum_jk w_j x_k / m_i` and
/// `d_j*(t_i) = sum_k w_j / m_i`, with `m_i` the cell mass (`dt_i` under the
/// marginal rows). With a free horizon the trajectory ends at the total
/// mass: later cells are dropped and the last one is clipped.
pub fn reconstruct(weights: &DiscreteMeasureSet, mesh: &Mesh, free_horizon: bool) -> Result<ExtractionResult> {
    let ncells = mesh.ncells();
    let n = mesh.nodes.len();
    let mass = weights.cell_mass(ncells);
    let mut sx = vec![vec![0.0; n]; ncells];
    let mut sd = vec![vec![0.0; weights.nmodes]; ncells];
    for &(j, i, k, w) in &weights.atoms {
        let x = mesh.node(k);
        for d in 0..n {
            sx[i][d] += w * x[d];
        }
        sd[i][j] += w;
    }
    let mut out = ExtractionResult {
        times: Vec::new(),
        bounds: vec![mesh.bounds[0]],
        states: Vec::new(),
        duty: Vec::new(),
        mismatch: weights.mismatch,
        horizon: mesh.bounds[0],
    };
    // with a free horizon the time marginal covers [t0, t0 + total mass]
    let end = if free_horizon {
        mesh.bounds[0] + mass.iter().sum::<f64>()
    } else {
        mesh.bounds[ncells]
    };
    for i in 0..ncells {
        let lo = mesh.bounds[i];
        if lo >= end - 1e-9 * mesh.dt[i] {
            break;
        }
        let m = mass[i];
        if m <= 1e-9 * mesh.dt[i] {
            return Err(Error::Extraction(format!("time cell {i} carries no mass")));
        }
        let hi = mesh.bounds[i + 1].min(end);
        out.times.push(0.5 * (lo + hi));
        out.bounds.push(hi);
        out.states.push(sx[i].iter().map(|v| v / m).collect());
        out.duty.push(sd[i].iter().map(|v| v / m).collect());
    }
    out.horizon = *out.bounds.last().expect("nonempty");
    if out.times.is_empty() {
        return Err(Error::Extraction("no time cell carries mass".into()));
    }
    Ok(out)
}

impl ExtractionResult {
    /// Same result in original coordinates.
    pub fn unscaled(&self, p: &SwitchedProblem, s: &Scaling) -> ExtractionResult {
        let states = p.state_indices();
        ExtractionResult {
            times: self.times.iter().map(|&t| s.time_to_original(t)).collect(),
            bounds: self.bounds.iter().map(|&t| s.time_to_original(t)).collect(),
            states: self
                .states
                .iter()
                .map(|x| x.iter().zip(&states).map(|(&v, &i)| s.from_scaled(i, v)).collect())
                .collect(),
            duty: self.duty.clone(),
            mismatch: self.mismatch,
            horizon: s.time_to_original(self.horizon),
        }
    }

    /// Piecewise-constant duty cycles on the result's cells.
    pub fn schedule(&self) -> DutySchedule {
        DutySchedule {
            bounds: self.bounds.clone(),
            duty: self.duty.clone(),
            controls: None,
        }
    }

    /// CSV with columns `t, <state names>, d1, ..., dm`.
    pub fn write_csv(&self, state_names: &[String], w: impl Write) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let nmodes = self.duty.first().map_or(0, |d| d.len());
        let mut header = vec!["t".to_string()];
        header.extend(state_names.iter().cloned());
        header.extend((1..=nmodes).map(|j| format!("d{j}")));
        let fmt_err = |e: csv::Error| Error::Format(format!("writing extraction csv: {e}"));
        wr.write_record(&header).map_err(fmt_err)?;
        for i in 0..self.times.len() {
            let mut rec = vec![format!("{}", self.times[i])];
            rec.extend(self.states[i].iter().map(|v| format!("{v}")));
            rec.extend(self.duty[i].iter().map(|v| format!("{v}")));
            wr.write_record(&rec).map_err(fmt_err)?;
        }
        wr.flush().map_err(|source| Error::Io {
            context: "writing extraction csv".into(),
            source,
        })
    }
}

/// Full pipeline on a solved scaled relaxation: moments up to `2r`, mesh LP,
/// conditional means. The result is in scaled coordinates.
pub fn extract(
    p: &SwitchedProblem,
    layout: &MeasureLayout,
    y: &[f64],
    r: u32,
    eps: f64,
    method: LpMethod,
) -> Result<ExtractionResult> {
    let moments = ModalMoments::from_solution(p, layout, y, r)?;
    let mesh = Mesh::for_problem(p, eps)?;
    let free = p.boundary.horizon.is_free();
    let lp = build_extraction_lp(&moments, &mesh, free)?;
    let w = solve_lp_with(&lp, method)?;
    reconstruct(&w, &mesh, free)
}
