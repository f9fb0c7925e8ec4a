//! Evaluation of one polynomial over every point of a tensor grid by
//! collapsing one variable at a time.

/// Fixed monomial structure over `dims` variables, reusable for any
/// coefficient vector in the same term order.
#[derive(Clone, Debug)]
pub(crate) struct GridEvaluator {
    /// `levels[l][k] = (exponent of variable l, index of the tail at level l + 1)`
    /// for the `k`-th distinct tail at level `l` (level 0 tails are the terms).
    levels: Vec<Vec<(u32, usize)>>,
    /// Number of distinct tails per level; the last level has one per power.
    widths: Vec<usize>,
    /// `powers[l][node][e] = grid[l][node]^e`.
    powers: Vec<Vec<Vec<f64>>>,
    sizes: Vec<usize>,
}

impl GridEvaluator {
    pub fn new(exponents: &[Vec<u32>], grids: &[Vec<f64>]) -> Self {
        let dims = grids.len();
        assert!(dims >= 1);
        let max_deg = exponents.iter().flatten().copied().max().unwrap_or(0) as usize;
        let powers = grids
            .iter()
            .map(|g| {
                g.iter()
                    .map(|&v| {
                        let mut p = Vec::with_capacity(max_deg + 1);
                        let mut acc = 1.0;
                        for _ in 0..=max_deg {
                            p.push(acc);
                            acc *= v;
                        }
                        p
                    })
                    .collect()
            })
            .collect();
        let mut levels = Vec::with_capacity(dims);
        let mut widths = Vec::with_capacity(dims);
        let mut tails: Vec<Vec<u32>> = exponents.to_vec();
        for l in 0..dims {
            widths.push(tails.len());
            if l + 1 == dims {
                levels.push(tails.iter().map(|t| (t[0], 0)).collect());
                break;
            }
            let mut next: Vec<Vec<u32>> = Vec::new();
            let mut map = Vec::with_capacity(tails.len());
            for t in &tails {
                let rest = t[1..].to_vec();
                let idx = match next.iter().position(|r| *r == rest) {
                    Some(i) => i,
                    None => {
                        next.push(rest);
                        next.len() - 1
                    }
                };
                map.push((t[0], idx));
            }
            levels.push(map);
            tails = next;
        }
        GridEvaluator {
            levels,
            widths,
            powers,
            sizes: grids.iter().map(|g| g.len()).collect(),
        }
    }

    /// Replaces the powers of variable `l`: `table[node][e]` stands for
    /// `grid[l][node]^e`, e.g. an average of `t^e` over a cell.
    pub fn with_powers(mut self, l: usize, table: Vec<Vec<f64>>) -> Self {
        assert_eq!(table.len(), self.sizes[l]);
        let need = self.powers[l].first().map_or(0, |p| p.len());
        assert!(table.iter().all(|p| p.len() >= need));
        self.powers[l] = table;
        self
    }

    pub fn grid_len(&self) -> usize {
        self.sizes.iter().product()
    }

    /// Values of `sum_k coeffs[k] * z^exponents[k]` at every grid point, in
    /// row-major order (first variable slowest).
    pub fn eval(&self, coeffs: &[f64], out: &mut [f64]) {
        debug_assert_eq!(coeffs.len(), self.widths[0]);
        debug_assert_eq!(out.len(), self.grid_len());
        self.eval_level(0, coeffs, out);
    }

    /// Adjoint of [`eval`](Self::eval): `out[k] = sum_grid w * z^exponents[k]`.
    pub fn moments(&self, w: &[f64], out: &mut [f64]) {
        debug_assert_eq!(w.len(), self.grid_len());
        out.iter_mut().for_each(|v| *v = 0.0);
        self.moments_level(0, w, out);
    }

    /// Moments of each slice along the first variable:
    /// `out[i * nterms + k] = sum_{grid, first index i} w * z^exponents[k]`.
    pub fn slice_moments(&self, w: &[f64], out: &mut [f64]) {
        let nterms = self.widths[0];
        debug_assert_eq!(out.len(), self.sizes[0] * nterms);
        out.iter_mut().for_each(|v| *v = 0.0);
        if self.levels.len() == 1 {
            for (node, &wv) in w.iter().enumerate() {
                let pw = &self.powers[0][node];
                for (k, &(e, _)) in self.levels[0].iter().enumerate() {
                    out[node * nterms + k] = wv * pw[e as usize];
                }
            }
            return;
        }
        let stride: usize = self.sizes[1..].iter().product();
        let mut tail = vec![0.0; self.widths[1]];
        for node in 0..self.sizes[0] {
            tail.iter_mut().for_each(|v| *v = 0.0);
            self.moments_level(1, &w[node * stride..(node + 1) * stride], &mut tail);
            let pw = &self.powers[0][node];
            for (k, &(e, tk)) in self.levels[0].iter().enumerate() {
                out[node * nterms + k] = pw[e as usize] * tail[tk];
            }
        }
    }

    fn moments_level(&self, l: usize, w: &[f64], out: &mut [f64]) {
        let map = &self.levels[l];
        if l + 1 == self.levels.len() {
            for (node, &wv) in w.iter().enumerate() {
                if wv == 0.0 {
                    continue;
                }
                let pw = &self.powers[l][node];
                for (o, &(e, _)) in out.iter_mut().zip(map) {
                    *o += wv * pw[e as usize];
                }
            }
            return;
        }
        let stride: usize = self.sizes[l + 1..].iter().product();
        let mut tail = vec![0.0; self.widths[l + 1]];
        for node in 0..self.sizes[l] {
            let sub = &w[node * stride..(node + 1) * stride];
            if sub.iter().all(|&v| v == 0.0) {
                continue;
            }
            tail.iter_mut().for_each(|v| *v = 0.0);
            self.moments_level(l + 1, sub, &mut tail);
            let pw = &self.powers[l][node];
            for (o, &(e, tk)) in out.iter_mut().zip(map) {
                *o += pw[e as usize] * tail[tk];
            }
        }
    }

    fn eval_level(&self, l: usize, coeffs: &[f64], out: &mut [f64]) {
        let map = &self.levels[l];
        if l + 1 == self.levels.len() {
            for (node, o) in out.iter_mut().enumerate() {
                let pw = &self.powers[l][node];
                *o = map.iter().zip(coeffs).map(|(&(e, _), c)| c * pw[e as usize]).sum();
            }
            return;
        }
        let stride: usize = self.sizes[l + 1..].iter().product();
        let mut tail = vec![0.0; self.widths[l + 1]];
        for node in 0..self.sizes[l] {
            tail.iter_mut().for_each(|v| *v = 0.0);
            let pw = &self.powers[l][node];
            for (&(e, k), c) in map.iter().zip(coeffs) {
                tail[k] += c * pw[e as usize];
            }
            self.eval_level(l + 1, &tail, &mut out[node * stride..(node + 1) * stride]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_are_the_adjoint() {
        let exps = vec![vec![0, 0], vec![1, 0], vec![0, 2], vec![2, 1]];
        let grids = vec![vec![-1.0, 0.5, 2.0], vec![0.0, 1.5]];
        let ev = GridEvaluator::new(&exps, &grids);
        let w = [0.3, -1.0, 2.0, 0.0, 0.7, 1.1];
        let mut m = vec![0.0; 4];
        ev.moments(&w, &mut m);
        for (k, e) in exps.iter().enumerate() {
            let mut coeffs = vec![0.0; 4];
            coeffs[k] = 1.0;
            let mut vals = vec![0.0; 6];
            ev.eval(&coeffs, &mut vals);
            let direct: f64 = vals.iter().zip(&w).map(|(a, b)| a * b).sum();
            assert!((m[k] - direct).abs() < 1e-12, "{e:?}");
        }
        let mut s = vec![0.0; 12];
        ev.slice_moments(&w, &mut s);
        for k in 0..4 {
            let total: f64 = (0..3).map(|i| s[i * 4 + k]).sum();
            assert!((total - m[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn custom_powers_replace_the_grid() {
        let exps = vec![vec![0, 1], vec![2, 0], vec![1, 1]];
        let grids = vec![vec![0.0, 1.0], vec![2.0]];
        let table = vec![vec![1.0, 0.5, 1.0 / 3.0], vec![1.0, 1.5, 7.0 / 3.0]];
        let ev = GridEvaluator::new(&exps, &grids).with_powers(0, table.clone());
        let mut out = vec![0.0; 2];
        ev.eval(&[1.0, 1.0, 1.0], &mut out);
        for i in 0..2 {
            let direct = 2.0 + table[i][2] + table[i][1] * 2.0;
            assert!((out[i] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_direct_evaluation() {
        let exps = vec![vec![0, 0, 0], vec![1, 0, 2], vec![0, 3, 1], vec![2, 1, 0], vec![1, 1, 1]];
        let coeffs = [0.5, -1.0, 2.0, 0.25, 3.0];
        let grids = vec![vec![-1.0, 0.3], vec![0.0, 0.5, 1.0], vec![-0.7, 2.0]];
        let ev = GridEvaluator::new(&exps, &grids);
        let mut out = vec![0.0; ev.grid_len()];
        ev.eval(&coeffs, &mut out);
        let mut k = 0;
        for &a in &grids[0] {
            for &b in &grids[1] {
                for &c in &grids[2] {
                    let direct: f64 = exps
                        .iter()
                        .zip(&coeffs)
                        .map(|(e, w)| w * a.powi(e[0] as i32) * b.powi(e[1] as i32) * c.powi(e[2] as i32))
                        .sum();
                    assert!((out[k] - direct).abs() < 1e-12);
                    k += 1;
                }
            }
        }
    }
}
