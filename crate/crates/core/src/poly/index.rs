use std::cmp::Ordering;
use std::fmt;

/// Exponent vector of a monomial over a fixed, ordered set of variables.
///
/// The ordering is graded lexicographic: lower total degree first, then the
/// exponent of the first variable descending, then the second, and so on.
/// For variables `(t, x)` the degree-2 block reads `t^2, t*x, x^2`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        MultiIndex(exponents)
    }

    pub fn zero(nvars: usize) -> Self {
        MultiIndex(vec![0; nvars])
    }

    /// Unit index `e_var`.
    pub fn unit(nvars: usize, var: usize) -> Self {
        let mut e = vec![0; nvars];
        e[var] = 1;
        MultiIndex(e)
    }

    pub fn nvars(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn get(&self, var: usize) -> u32 {
        self.0[var]
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    /// Componentwise sum, the exponent of the product monomial.
    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        debug_assert_eq!(self.0.len(), other.0.len());
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// Index with one exponent lowered by one, or `None` if it is already zero.
    pub fn decrement(&self, var: usize) -> Option<MultiIndex> {
        if self.0[var] == 0 {
            return None;
        }
        let mut e = self.0.clone();
        e[var] -= 1;
        Some(MultiIndex(e))
    }

    pub fn with(&self, var: usize, exponent: u32) -> MultiIndex {
        let mut e = self.0.clone();
        e[var] = exponent;
        MultiIndex(e)
    }

    /// True when every nonzero exponent sits on one of `vars`.
    pub fn supported_on(&self, vars: &[usize]) -> bool {
        self.0
            .iter()
            .enumerate()
            .all(|(i, &e)| e == 0 || vars.contains(&i))
    }

    /// Value of the monomial at `point`.
    pub fn eval(&self, point: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(point)
            .filter(|(&e, _)| e > 0)
            .map(|(&e, &x)| x.powi(e as i32))
            .product()
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

/// All exponent vectors of `nvars` variables with total degree exactly `deg`,
/// in graded-lex order.
pub fn monomials_of_degree(nvars: usize, deg: u32) -> Vec<MultiIndex> {
    fn rec(prefix: &mut Vec<u32>, remaining: u32, left: usize, out: &mut Vec<MultiIndex>) {
        if left == 1 {
            prefix.push(remaining);
            out.push(MultiIndex(prefix.clone()));
            prefix.pop();
            return;
        }
        for e in (0..=remaining).rev() {
            prefix.push(e);
            rec(prefix, remaining - e, left - 1, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if nvars == 0 {
        if deg == 0 {
            out.push(MultiIndex(Vec::new()));
        }
        return out;
    }
    rec(&mut Vec::with_capacity(nvars), deg, nvars, &mut out);
    out
}

/// All exponent vectors of total degree at most `deg`, graded-lex order.
/// There are `C(nvars + deg, nvars)` of them and the first is the zero index.
pub fn monomials_up_to(nvars: usize, deg: u32) -> Vec<MultiIndex> {
    (0..=deg)
        .flat_map(|k| monomials_of_degree(nvars, k))
        .collect()
}

/// Monomials of degree at most `deg` that only involve the variables in `vars`,
/// expressed over the full `nvars`-variable space.
pub fn monomials_on(nvars: usize, vars: &[usize], deg: u32) -> Vec<MultiIndex> {
    monomials_up_to(vars.len(), deg)
        .into_iter()
        .map(|sub| {
            let mut e = vec![0; nvars];
            for (k, &v) in vars.iter().enumerate() {
                e[v] = sub.0[k];
            }
            MultiIndex(e)
        })
        .collect()
}

/// Binomial coefficient `C(n, k)` as an integer.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}
