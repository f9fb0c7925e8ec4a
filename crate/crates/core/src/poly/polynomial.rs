use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use super::{MultiIndex, PolyError, VariableSpace};

/// Sparse real polynomial over a [`VariableSpace`].
///
/// Terms are kept in graded-lex order and zero coefficients are never stored.
#[derive(Clone, PartialEq)]
pub struct Polynomial {
    space: Arc<VariableSpace>,
    terms: BTreeMap<MultiIndex, f64>,
}

/// Binary operation selector for [`poly_arith`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
}

impl Polynomial {
    pub fn zero(space: &Arc<VariableSpace>) -> Self {
        Polynomial {
            space: space.clone(),
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(space: &Arc<VariableSpace>, c: f64) -> Self {
        Self::monomial(space, MultiIndex::zero(space.len()), c)
    }

    pub fn monomial(space: &Arc<VariableSpace>, index: MultiIndex, c: f64) -> Self {
        assert_eq!(index.nvars(), space.len(), "index length must match the space");
        let mut p = Self::zero(space);
        if c != 0.0 {
            p.terms.insert(index, c);
        }
        p
    }

    /// The polynomial `z_i`.
    pub fn var(space: &Arc<VariableSpace>, i: usize) -> Self {
        Self::monomial(space, MultiIndex::unit(space.len(), i), 1.0)
    }

    pub fn from_terms(
        space: &Arc<VariableSpace>,
        terms: impl IntoIterator<Item = (MultiIndex, f64)>,
    ) -> Self {
        let mut p = Self::zero(space);
        for (k, c) in terms {
            assert_eq!(k.nvars(), space.len(), "index length must match the space");
            p.add_term(k, c);
        }
        p
    }

    pub fn space(&self) -> &Arc<VariableSpace> {
        &self.space
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> + '_ {
        self.terms.iter().map(|(k, &c)| (k, c))
    }

    pub fn term_map(&self) -> &BTreeMap<MultiIndex, f64> {
        &self.terms
    }

    pub fn nterms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, index: &MultiIndex) -> f64 {
        self.terms.get(index).copied().unwrap_or(0.0)
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|k| k.degree()).max().unwrap_or(0)
    }

    /// Degree in the single variable `var`.
    pub fn degree_in(&self, var: usize) -> u32 {
        self.terms.keys().map(|k| k.get(var)).max().unwrap_or(0)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Indices of the variables that actually occur.
    pub fn variables(&self) -> Vec<usize> {
        (0..self.space.len())
            .filter(|&i| self.terms.keys().any(|k| k.get(i) > 0))
            .collect()
    }

    pub fn involves_only(&self, vars: &[usize]) -> bool {
        self.terms.keys().all(|k| k.supported_on(vars))
    }

    fn add_term(&mut self, k: MultiIndex, c: f64) {
        if c == 0.0 {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(k) {
            Entry::Vacant(e) => {
                e.insert(c);
            }
            Entry::Occupied(mut e) => {
                let s = *e.get() + c;
                if s == 0.0 {
                    e.remove();
                } else {
                    *e.get_mut() = s;
                }
            }
        }
    }

    fn check_space(&self, other: &Polynomial) -> Result<(), PolyError> {
        if Arc::ptr_eq(&self.space, &other.space) || self.space == other.space {
            Ok(())
        } else {
            Err(PolyError::SpaceMismatch)
        }
    }

    pub fn try_add(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_space(other)?;
        let mut out = self.clone();
        for (k, &c) in &other.terms {
            out.add_term(k.clone(), c);
        }
        Ok(out)
    }

    pub fn try_sub(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_space(other)?;
        let mut out = self.clone();
        for (k, &c) in &other.terms {
            out.add_term(k.clone(), -c);
        }
        Ok(out)
    }

    pub fn try_mul(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_space(other)?;
        let mut out = Polynomial::zero(&self.space);
        for (a, &ca) in &self.terms {
            for (b, &cb) in &other.terms {
                out.add_term(a.add(b), ca * cb);
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        let mut out = Polynomial::zero(&self.space);
        for (k, &c) in &self.terms {
            out.add_term(k.clone(), c * s);
        }
        out
    }

    /// Multiply by the monomial `z^index`.
    pub fn shift(&self, index: &MultiIndex) -> Polynomial {
        Polynomial {
            space: self.space.clone(),
            terms: self.terms.iter().map(|(k, &c)| (k.add(index), c)).collect(),
        }
    }

    pub fn pow(&self, e: u32) -> Polynomial {
        let mut acc = Polynomial::constant(&self.space, 1.0);
        for _ in 0..e {
            acc = &acc * self;
        }
        acc
    }

    /// Partial derivative with respect to variable index `var`.
    pub fn derivative(&self, var: usize) -> Polynomial {
        let mut out = Polynomial::zero(&self.space);
        for (k, &c) in &self.terms {
            if let Some(lower) = k.decrement(var) {
                out.add_term(lower, c * k.get(var) as f64);
            }
        }
        out
    }

    /// Partial derivative with respect to a named variable.
    pub fn differentiate(&self, var: &str) -> Result<Polynomial, PolyError> {
        let i = self
            .space
            .index_of(var)
            .ok_or_else(|| PolyError::UnknownVariable(var.to_string()))?;
        Ok(self.derivative(i))
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<f64, PolyError> {
        if point.len() != self.space.len() {
            return Err(PolyError::DimensionMismatch {
                expected: self.space.len(),
                found: point.len(),
            });
        }
        Ok(self.eval(point))
    }

    /// Unchecked evaluation; `point` must have one entry per variable.
    pub fn eval(&self, point: &[f64]) -> f64 {
        self.terms.iter().map(|(k, &c)| c * k.eval(point)).sum()
    }

    /// Substitute every variable `z_i` by `images[i]`, which all live in a
    /// common target space. Used for affine changes of coordinates.
    pub fn compose(&self, images: &[Polynomial]) -> Result<Polynomial, PolyError> {
        if images.len() != self.space.len() {
            return Err(PolyError::DimensionMismatch {
                expected: self.space.len(),
                found: images.len(),
            });
        }
        let target = match images.first() {
            Some(p) => p.space.clone(),
            None => return Ok(self.clone()),
        };
        for img in images {
            if !(Arc::ptr_eq(&img.space, &target) || *img.space == *target) {
                return Err(PolyError::SpaceMismatch);
            }
        }
        let mut powers: Vec<Vec<Polynomial>> = images
            .iter()
            .map(|p| vec![Polynomial::constant(&target, 1.0), p.clone()])
            .collect();
        let mut out = Polynomial::zero(&target);
        for (k, &c) in &self.terms {
            let mut term = Polynomial::constant(&target, c);
            for (i, &e) in k.exponents().iter().enumerate() {
                if e == 0 {
                    continue;
                }
                while powers[i].len() <= e as usize {
                    let next = powers[i].last().unwrap() * &images[i];
                    powers[i].push(next);
                }
                term = &term * &powers[i][e as usize];
            }
            for (kk, cc) in term.terms {
                out.add_term(kk, cc);
            }
        }
        Ok(out)
    }

    /// Same coefficients re-homed onto an equal space (used after deserialization).
    pub fn with_space(&self, space: &Arc<VariableSpace>) -> Result<Polynomial, PolyError> {
        if *self.space != **space {
            return Err(PolyError::SpaceMismatch);
        }
        Ok(Polynomial {
            space: space.clone(),
            terms: self.terms.clone(),
        })
    }

    /// Drop coefficients with magnitude at most `tol`.
    pub fn prune(&self, tol: f64) -> Polynomial {
        Polynomial {
            space: self.space.clone(),
            terms: self
                .terms
                .iter()
                .filter(|(_, c)| c.abs() > tol)
                .map(|(k, &c)| (k.clone(), c))
                .collect(),
        }
    }
}

/// Checked binary arithmetic on two polynomials over the same space.
pub fn poly_arith(a: &Polynomial, b: &Polynomial, op: ArithOp) -> Result<Polynomial, PolyError> {
    match op {
        ArithOp::Add => a.try_add(b),
        ArithOp::Sub => a.try_sub(b),
        ArithOp::Mul => a.try_mul(b),
    }
}

/// Mode Lie derivative `dv/dt + sum_i dv/dx_i * f_i`, the adjoint of the mode
/// generator applied to a test function. `f` lists one component per state
/// variable, in the order the states appear in the space.
pub fn lie_derivative(v: &Polynomial, f: &[Polynomial]) -> Result<Polynomial, PolyError> {
    let space = v.space();
    let states = space.state_indices();
    if f.len() != states.len() {
        return Err(PolyError::DimensionMismatch {
            expected: states.len(),
            found: f.len(),
        });
    }
    let mut out = v.derivative(space.time_index());
    for (&xi, fi) in states.iter().zip(f) {
        let dv = v.derivative(xi);
        if dv.is_zero() {
            continue;
        }
        out = out.try_add(&dv.try_mul(fi)?)?;
    }
    Ok(out)
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        self.try_add(rhs).expect("polynomial spaces differ")
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self.try_sub(rhs).expect("polynomial spaces differ")
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        self.try_mul(rhs).expect("polynomial spaces differ")
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

fn fmt_coeff(c: f64) -> String {
    let a = c.abs();
    if a != 0.0 && !(1e-4..1e15).contains(&a) {
        format!("{c:e}")
    } else {
        format!("{c}")
    }
}

/// Canonical form: graded-lex terms, explicit coefficients, e.g. `2*t*x^2 - 6`.
impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (n, (k, &c)) in self.terms.iter().enumerate() {
            let mag = if n == 0 {
                fmt_coeff(c)
            } else {
                write!(f, " {} ", if c < 0.0 { '-' } else { '+' })?;
                fmt_coeff(c.abs())
            };
            write!(f, "{mag}")?;
            for (i, &e) in k.exponents().iter().enumerate() {
                match e {
                    0 => {}
                    1 => write!(f, "*{}", self.space.name(i))?,
                    _ => write!(f, "*{}^{}", self.space.name(i), e)?,
                }
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Polynomial({self})")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tx() -> Arc<VariableSpace> {
        Arc::new(VariableSpace::time_states("t", &["x"]))
    }

    fn mono(space: &Arc<VariableSpace>, e: &[u32], c: f64) -> Polynomial {
        Polynomial::monomial(space, MultiIndex::new(e.to_vec()), c)
    }

    #[test]
    fn arithmetic_examples() {
        let s = tx();
        let t = Polynomial::var(&s, 0);
        let x = Polynomial::var(&s, 1);
        assert_eq!(&x * &x, mono(&s, &[0, 2], 1.0));
        assert_eq!(&(&t + &x) - &t, x);
        let x2m1 = &(&x * &x) - &Polynomial::constant(&s, 1.0);
        let expect = &mono(&s, &[0, 2], 3.0) - &Polynomial::constant(&s, 3.0);
        assert_eq!(x2m1.scale(3.0), expect);
        // cancellation leaves no stored zeros
        assert!((&x - &x).is_zero());
    }

    #[test]
    fn space_mismatch_is_an_error() {
        let a = Polynomial::var(&tx(), 1);
        let other = Arc::new(VariableSpace::time_states("t", &["y"]));
        let b = Polynomial::var(&other, 1);
        assert!(matches!(
            poly_arith(&a, &b, ArithOp::Add),
            Err(PolyError::SpaceMismatch)
        ));
    }

    #[test]
    fn derivative_examples() {
        let s = tx();
        let t2x = mono(&s, &[2, 1], 1.0);
        assert_eq!(t2x.differentiate("t").unwrap(), mono(&s, &[1, 1], 2.0));
        assert_eq!(mono(&s, &[0, 2], 1.0).differentiate("x").unwrap(), mono(&s, &[0, 1], 2.0));
        assert!(Polynomial::constant(&s, 4.0).differentiate("x").unwrap().is_zero());
        assert!(matches!(
            t2x.differentiate("y"),
            Err(PolyError::UnknownVariable(_))
        ));
    }

    #[test]
    fn lie_derivative_examples() {
        let s = tx();
        let t = Polynomial::var(&s, 0);
        let x = Polynomial::var(&s, 1);
        assert_eq!(lie_derivative(&t, &[x.scale(-1.0)]).unwrap(), Polynomial::constant(&s, 1.0));
        assert_eq!(lie_derivative(&x, &[x.scale(-1.0)]).unwrap(), x.scale(-1.0));

        let s2 = Arc::new(VariableSpace::time_states("t", &["x1", "x2"]));
        let x1 = Polynomial::var(&s2, 1);
        let x2 = Polynomial::var(&s2, 2);
        let f = [x2.clone(), Polynomial::constant(&s2, -1.0)];
        assert_eq!(lie_derivative(&x1, &f).unwrap(), x2);
        assert!(matches!(
            lie_derivative(&x1, &f[..1]),
            Err(PolyError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn evaluation_examples() {
        let s = tx();
        let tx_ = mono(&s, &[1, 1], 1.0);
        assert_eq!(tx_.evaluate(&[0.5, 2.0]).unwrap(), 1.0);
        assert_eq!(mono(&s, &[0, 2], 1.0).evaluate(&[7.0, 0.5]).unwrap(), 0.25);
        let t = Polynomial::var(&s, 0);
        let b = t.evaluate(&[1.0, 0.3]).unwrap() - t.evaluate(&[0.0, 0.5]).unwrap();
        assert_eq!(b, 1.0);
        assert!(tx_.evaluate(&[1.0]).is_err());
    }

    #[test]
    fn compose_affine() {
        let s = tx();
        let t = Polynomial::var(&s, 0);
        let x = Polynomial::var(&s, 1);
        // p(t, x) = t * x^2 under t -> 2t - 1, x -> x
        let p = &t * &(&x * &x);
        let img_t = &t.scale(2.0) - &Polynomial::constant(&s, 1.0);
        let q = p.compose(&[img_t, x.clone()]).unwrap();
        for &(a, b) in &[(0.3, -0.7), (1.0, 2.0), (-0.2, 0.1)] {
            assert!((q.eval(&[a, b]) - (2.0 * a - 1.0) * b * b).abs() < 1e-14);
        }
    }

    #[test]
    fn display_is_canonical() {
        let s = tx();
        let p = Polynomial::from_terms(
            &s,
            [
                (MultiIndex::new(vec![0, 0]), -6.0),
                (MultiIndex::new(vec![0, 1]), 2.0),
                (MultiIndex::new(vec![1, 2]), -0.5),
            ],
        );
        assert_eq!(p.to_string(), "-6 + 2*x - 0.5*t*x^2");
        assert_eq!(Polynomial::zero(&s).to_string(), "0");
    }
}
