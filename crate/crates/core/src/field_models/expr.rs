//! A small arithmetic expression language for user-defined log-fields.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'x' | 'y' | 'y' INT | 'y_' INT | 'pi'
//!         | func '(' expr ')' | 'norm1' '(' 'y' ')' | '(' expr ')'
//! func   := abs | exp | ln | sqrt | sin | cos
//! ```
//!
//! Stochastic coordinates are 1-based (`y1`, `y_1`); a bare `y` means `y1`.

use std::fmt;

use crate::field_models::FieldError;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Abs,
    Exp,
    Ln,
    Sqrt,
    Sin,
    Cos,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    X,
    /// 0-based stochastic coordinate.
    Y(usize),
    Norm1,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    /// Parses `src`, rejecting coordinates beyond `dprime`.
    pub fn parse(src: &str, dprime: usize) -> Result<Self, FieldError> {
        let mut p = Parser {
            src: src.as_bytes(),
            pos: 0,
            dprime,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn eval<T: Real>(&self, y: &[T], x: T) -> T {
        match self {
            Expr::Num(v) => T::lit(*v),
            Expr::X => x,
            Expr::Y(j) => y[*j],
            Expr::Norm1 => y.iter().fold(T::zero(), |a, v| a + v.abs()),
            Expr::Neg(a) => -a.eval(y, x),
            Expr::Add(a, b) => a.eval(y, x) + b.eval(y, x),
            Expr::Sub(a, b) => a.eval(y, x) - b.eval(y, x),
            Expr::Mul(a, b) => a.eval(y, x) * b.eval(y, x),
            Expr::Div(a, b) => a.eval(y, x) / b.eval(y, x),
            Expr::Pow(a, b) => a.eval(y, x).powf(b.eval(y, x)),
            Expr::Call(f, a) => {
                let v = a.eval(y, x);
                match f {
                    Func::Abs => v.abs(),
                    Func::Exp => v.exp(),
                    Func::Ln => v.ln(),
                    Func::Sqrt => v.sqrt(),
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                }
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::X => write!(f, "x"),
            Expr::Y(j) => write!(f, "y{}", j + 1),
            Expr::Norm1 => write!(f, "norm1(y)"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Call(func, a) => {
                let name = match func {
                    Func::Abs => "abs",
                    Func::Exp => "exp",
                    Func::Ln => "ln",
                    Func::Sqrt => "sqrt",
                    Func::Sin => "sin",
                    Func::Cos => "cos",
                };
                write!(f, "{name}({a})")
            }
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dprime: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> FieldError {
        FieldError::Parse {
            position: self.pos,
            message: msg.to_string(),
        }
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

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), FieldError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(&format!("expected '{}'", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr, FieldError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, FieldError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, FieldError> {
        if self.eat(b'-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, FieldError> {
        let base = self.atom()?;
        if self.eat(b'^') {
            return Ok(Expr::Pow(Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, FieldError> {
        match self.peek() {
            None => Err(self.err("unexpected end of expression")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            Some(c) => Err(self.err(&format!("unexpected character '{}'", c as char))),
        }
    }

    fn number(&mut self) -> Result<Expr, FieldError> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.')
        {
            self.pos += 1;
        }
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digits {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        text.parse::<f64>().map(Expr::Num).map_err(|_| FieldError::Parse {
            position: start,
            message: format!("invalid number '{text}'"),
        })
    }

    fn ident(&mut self) -> Result<Expr, FieldError> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        let func = match name {
            "abs" => Some(Func::Abs),
            "exp" => Some(Func::Exp),
            "ln" => Some(Func::Ln),
            "sqrt" => Some(Func::Sqrt),
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            _ => None,
        };
        if let Some(f) = func {
            self.expect(b'(')?;
            let arg = self.expr()?;
            self.expect(b')')?;
            return Ok(Expr::Call(f, Box::new(arg)));
        }
        match name {
            "x" => Ok(Expr::X),
            "pi" => Ok(Expr::Num(std::f64::consts::PI)),
            "norm1" => {
                self.expect(b'(')?;
                let here = self.pos;
                if self.peek() != Some(b'y') {
                    return Err(self.err("norm1 takes the vector 'y'"));
                }
                self.pos += 1;
                if self
                    .src
                    .get(self.pos)
                    .is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_')
                {
                    self.pos = here;
                    return Err(self.err("norm1 takes the vector 'y'"));
                }
                self.expect(b')')?;
                Ok(Expr::Norm1)
            }
            _ => {
                let index = if name == "y" {
                    Some(1)
                } else {
                    name.strip_prefix('y')
                        .map(|r| r.strip_prefix('_').unwrap_or(r))
                        .and_then(|r| r.parse::<usize>().ok())
                };
                match index {
                    Some(j) if j >= 1 && j <= self.dprime => Ok(Expr::Y(j - 1)),
                    Some(j) => Err(FieldError::Parse {
                        position: start,
                        message: format!("coordinate y{j} outside 1..={}", self.dprime),
                    }),
                    None => Err(FieldError::Parse {
                        position: start,
                        message: format!("unknown identifier '{name}'"),
                    }),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, y: &[f64], x: f64) -> f64 {
        Expr::parse(src, y.len()).unwrap().eval(y, x)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3", &[0.0], 0.0), 7.0);
        assert_eq!(ev("2 ^ 3 ^ 2", &[0.0], 0.0), 512.0);
        assert_eq!(ev("-2 ^ 2", &[0.0], 0.0), -4.0);
        assert_eq!(ev("(1 - 2) - 3", &[0.0], 0.0), -4.0);
        assert_eq!(ev("8 / 2 / 2", &[0.0], 0.0), 2.0);
        assert_eq!(ev("1.5e1 + 1e-1", &[0.0], 0.0), 15.1);
    }

    #[test]
    fn catalog_formulas_round_trip() {
        let v = ev("exp(-abs(x - y))", &[0.3], 0.8);
        assert!((v - (-0.5f64).exp()).abs() < 1e-15);
        let v = ev("exp(-abs(x - 0.5) * norm1(y))", &[1.0, -2.0], 0.0);
        assert!((v - (-1.5f64).exp()).abs() < 1e-15);
        assert_eq!(ev("y_2 + y3", &[0.0, 1.0, 2.0], 0.0), 3.0);
    }

    #[test]
    fn errors_carry_positions() {
        assert!(matches!(
            Expr::parse("x + z", 1),
            Err(FieldError::Parse { position: 4, .. })
        ));
        assert!(Expr::parse("y3", 2).is_err());
        assert!(Expr::parse("exp(x", 1).is_err());
        assert!(Expr::parse("x x", 1).is_err());
        assert!(Expr::parse("norm1(y1)", 1).is_err());
    }
}
