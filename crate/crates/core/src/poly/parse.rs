//! Recursive-descent parser for polynomial expressions.
//!
//! Grammar (whitespace is ignored between tokens):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary ('*' unary)*
//! unary  := ('+' | '-') unary | power
//! power  := atom ('^' integer)?
//! atom   := number | identifier | '(' expr ')'
//! number := digits ('.' digits?)? (('e' | 'E') ('+' | '-')? digits)?
//! ```
//!
//! Exponents must be nonnegative integer literals.

use std::sync::Arc;

use super::{PolyError, Polynomial, VariableSpace};

pub fn parse_polynomial(text: &str, space: &Arc<VariableSpace>) -> Result<Polynomial, PolyError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
        space,
    };
    p.skip_ws();
    if p.at_end() {
        return Err(p.error(0, "empty expression"));
    }
    let out = p.expr()?;
    p.skip_ws();
    if !p.at_end() {
        return Err(p.error(p.pos, &format!("unexpected '{}'", p.src[p.pos] as char)));
    }
    Ok(out)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    space: &'a Arc<VariableSpace>,
}

impl Parser<'_> {
    fn error(&self, position: usize, message: &str) -> PolyError {
        PolyError::Parse {
            position,
            message: message.to_string(),
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            acc = if c == b'+' { &acc + &rhs } else { &acc - &rhs };
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.unary()?;
        while let Some(b'*') = self.peek() {
            self.pos += 1;
            let rhs = self.unary()?;
            acc = &acc * &rhs;
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Polynomial, PolyError> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(-&self.unary()?)
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Polynomial, PolyError> {
        let base = self.atom()?;
        if let Some(b'^') = self.peek() {
            self.pos += 1;
            let e = self.exponent()?;
            return Ok(base.pow(e));
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<u32, PolyError> {
        let start = match self.peek() {
            Some(b'-') => return Err(self.error(self.pos, "negative exponent")),
            Some(c) if c.is_ascii_digit() => self.pos,
            Some(c) => return Err(self.error(self.pos, &format!("expected exponent, found '{}'", c as char))),
            None => return Err(self.error(self.pos, "expected exponent, found end of input")),
        };
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'.' | b'e' | b'E') {
            return Err(self.error(start, "fractional exponent"));
        }
        let digits = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        digits
            .parse::<u32>()
            .map_err(|_| self.error(start, "exponent out of range"))
    }

    fn atom(&mut self) -> Result<Polynomial, PolyError> {
        match self.peek() {
            Some(b'(') => {
                let open = self.pos;
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.error(self.pos, &format!("unclosed '(' opened at {open}")));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(c) => Err(self.error(self.pos, &format!("unexpected '{}'", c as char))),
            None => Err(self.error(self.pos, "unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<Polynomial, PolyError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut n = digits(self);
        if self.pos < self.src.len() && self.src[self.pos] == b'.' {
            self.pos += 1;
            n += digits(self);
        }
        if n == 0 {
            return Err(self.error(start, "malformed number"));
        }
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            if digits(self) == 0 {
                return Err(self.error(save, "malformed exponent in number"));
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let value: f64 = text.parse().map_err(|_| self.error(start, "malformed number"))?;
        Ok(Polynomial::constant(self.space, value))
    }

    fn identifier(&mut self) -> Result<Polynomial, PolyError> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        match self.space.index_of(name) {
            Some(i) => Ok(Polynomial::var(self.space, i)),
            None => Err(self.error(start, &format!("unknown identifier '{name}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::MultiIndex;

    fn space(vars: &[&str]) -> Arc<VariableSpace> {
        Arc::new(VariableSpace::time_states("t", vars))
    }

    fn term_vec(p: &Polynomial) -> Vec<(Vec<u32>, f64)> {
        p.terms().map(|(k, c)| (k.exponents().to_vec(), c)).collect()
    }

    #[test]
    fn examples() {
        let s = space(&["x"]);
        assert_eq!(term_vec(&parse_polynomial("t", &s).unwrap()), vec![(vec![1, 0], 1.0)]);
        assert_eq!(term_vec(&parse_polynomial("-x", &s).unwrap()), vec![(vec![0, 1], -1.0)]);
        let s3 = space(&["x1", "x2"]);
        let p = parse_polynomial("2*(x2-3)", &s3).unwrap();
        assert_eq!(p.coefficient(&MultiIndex::new(vec![0, 0, 1])), 2.0);
        assert_eq!(p.coefficient(&MultiIndex::new(vec![0, 0, 0])), -6.0);
        assert_eq!(p.nterms(), 2);
    }

    #[test]
    fn precedence_and_whitespace() {
        let s = space(&["x"]);
        let a = parse_polynomial("-x^2 + 3 * t*x - (1 - x)^2", &s).unwrap();
        let b = parse_polynomial("-x^2+3*t*x-(1-x)^2", &s).unwrap();
        assert_eq!(a, b);
        for &(tv, xv) in &[(0.5, 0.25), (-1.0, 2.0)] {
            let expect: f64 = -xv * xv + 3.0 * tv * xv - (1.0 - xv) * (1.0 - xv);
            assert!((a.eval(&[tv, xv]) - expect).abs() < 1e-12);
        }
        let c = parse_polynomial("1.5e-2*x + .5 + 2.", &s).unwrap();
        assert!((c.eval(&[0.0, 2.0]) - 2.53).abs() < 1e-12);
    }

    #[test]
    fn errors_carry_positions() {
        let s = space(&["x"]);
        match parse_polynomial("x + y", &s) {
            Err(PolyError::Parse { position, message }) => {
                assert_eq!(position, 4);
                assert!(message.contains("unknown identifier"));
            }
            other => panic!("{other:?}"),
        }
        match parse_polynomial("x^-1", &s) {
            Err(PolyError::Parse { position, message }) => {
                assert_eq!(position, 2);
                assert!(message.contains("negative"));
            }
            other => panic!("{other:?}"),
        }
        match parse_polynomial("x^1.5", &s) {
            Err(PolyError::Parse { message, .. }) => assert!(message.contains("fractional")),
            other => panic!("{other:?}"),
        }
        for bad in ["", "x +", "(x", "x )", "2**x", "x/2", "sin(x)"] {
            assert!(parse_polynomial(bad, &s).is_err(), "{bad}");
        }
    }
}
