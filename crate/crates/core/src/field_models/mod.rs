//! Catalog of bivariate log-fields `log κ(y, x)` on `D = [0, 1]`.

mod expr;

pub use expr::{Expr, Func};

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::scalar::Real;

/// Highest finite-element degree the catalog will suggest.
pub const MAX_DEGREE: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("stochastic point has {got} coordinates, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("x = {x} lies outside [0, 1]")]
    OutOfDomain { x: f64 },
    #[error("log-field is not finite at x = {x}")]
    NonFinite { x: f64 },
    #[error("expression error at byte {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("stochastic dimension must be at least 1")]
    InvalidDimension,
    #[error("smoothness must be positive and finite, got {0}")]
    InvalidSmoothness(f64),
}

/// x-regularity index `s` of the log-field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothness {
    Finite(f64),
    Unbounded,
}

impl Smoothness {
    /// Finite-element degree `⌈s⌉`, at least 1 and at most [`MAX_DEGREE`].
    pub fn default_degree(self) -> usize {
        match self {
            Smoothness::Finite(s) => (s.ceil() as usize).clamp(1, MAX_DEGREE),
            Smoothness::Unbounded => MAX_DEGREE,
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Smoothness::Finite(s) => s,
            Smoothness::Unbounded => f64::INFINITY,
        }
    }
}

/// A user-supplied evaluator `(y, x) ↦ log κ`.
pub type Evaluator = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum FieldKind {
    /// `e^{−|x−y|}`, `d′ = 1`.
    Example1,
    /// `e^{−|x−1/2|·‖y‖₁}`.
    Example2,
    /// `log κ ≡ c`.
    Constant(f64),
    Expression(Expr),
    Hook(Evaluator),
}

impl fmt::Debug for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldKind::Example1 => write!(f, "Example1"),
            FieldKind::Example2 => write!(f, "Example2"),
            FieldKind::Constant(c) => write!(f, "Constant({c})"),
            FieldKind::Expression(e) => write!(f, "Expression({e})"),
            FieldKind::Hook(_) => write!(f, "Hook"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FieldModel {
    name: String,
    dprime: usize,
    smoothness: Smoothness,
    kind: FieldKind,
    fixed_kinks: Vec<f64>,
}

impl FieldModel {
    /// `log κ(y, x) = e^{−|x−y|}` with `d′ = 1`, `s = 3/2`.
    pub fn example1() -> Self {
        Self {
            name: "example1".into(),
            dprime: 1,
            smoothness: Smoothness::Finite(1.5),
            kind: FieldKind::Example1,
            fixed_kinks: Vec::new(),
        }
    }

    /// `log κ(y, x) = e^{−|x−1/2|·‖y‖₁}`, smooth on each side of `x = 1/2`.
    pub fn example2(dprime: usize) -> Result<Self, FieldError> {
        if dprime == 0 {
            return Err(FieldError::InvalidDimension);
        }
        Ok(Self {
            name: "example2".into(),
            dprime,
            smoothness: Smoothness::Unbounded,
            kind: FieldKind::Example2,
            fixed_kinks: vec![0.5],
        })
    }

    /// `log κ ≡ c`.
    pub fn constant(c: f64, dprime: usize) -> Result<Self, FieldError> {
        if dprime == 0 {
            return Err(FieldError::InvalidDimension);
        }
        Ok(Self {
            name: "constant".into(),
            dprime,
            smoothness: Smoothness::Unbounded,
            kind: FieldKind::Constant(c),
            fixed_kinks: Vec::new(),
        })
    }

    /// Parses a custom expression; the smoothness must be declared.
    pub fn custom(expression: &str, dprime: usize, smoothness: Smoothness) -> Result<Self, FieldError> {
        if dprime == 0 {
            return Err(FieldError::InvalidDimension);
        }
        check_smoothness(smoothness)?;
        let expr = Expr::parse(expression, dprime)?;
        Ok(Self {
            name: "custom".into(),
            dprime,
            smoothness,
            kind: FieldKind::Expression(expr),
            fixed_kinks: Vec::new(),
        })
    }

    /// Wraps an arbitrary evaluator. It must be total and finite on
    /// `ℝ^{d′} × [0, 1]`.
    pub fn from_fn(name: &str, dprime: usize, smoothness: Smoothness, f: Evaluator) -> Result<Self, FieldError> {
        if dprime == 0 {
            return Err(FieldError::InvalidDimension);
        }
        check_smoothness(smoothness)?;
        Ok(Self {
            name: name.into(),
            dprime,
            smoothness,
            kind: FieldKind::Hook(f),
            fixed_kinks: Vec::new(),
        })
    }

    /// Declares fixed points in `(0, 1)` where the field has a derivative
    /// jump; quadrature splits there.
    pub fn with_kinks(mut self, kinks: Vec<f64>) -> Self {
        self.fixed_kinks = kinks.into_iter().filter(|&k| k > 0.0 && k < 1.0).collect();
        self.fixed_kinks.sort_by(f64::total_cmp);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Physical dimension; always 1.
    pub fn d(&self) -> usize {
        1
    }

    pub fn dprime(&self) -> usize {
        self.dprime
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn kind(&self) -> &FieldKind {
        &self.kind
    }

    pub fn default_degree(&self) -> usize {
        self.smoothness.default_degree()
    }

    /// Points in `(0, 1)` where `x ↦ log κ(y, x)` is not smooth, ascending.
    pub fn kinks<T: Real>(&self, y: &[T]) -> Vec<T> {
        let mut out: Vec<T> = self.fixed_kinks.iter().map(|&k| T::lit(k)).collect();
        if let FieldKind::Example1 = self.kind {
            if let Some(&y0) = y.first() {
                if y0 > T::zero() && y0 < T::one() {
                    out.push(y0);
                    out.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
                }
            }
        }
        out
    }

    /// Evaluates the catalog formula without argument checks.
    #[inline]
    pub fn log_field_unchecked<T: Real>(&self, y: &[T], x: T) -> T {
        match &self.kind {
            FieldKind::Example1 => (-(x - y[0]).abs()).exp(),
            FieldKind::Example2 => {
                let n1 = y.iter().fold(T::zero(), |a, v| a + v.abs());
                (-(x - T::lit(0.5)).abs() * n1).exp()
            }
            FieldKind::Constant(c) => T::lit(*c),
            FieldKind::Expression(e) => e.eval(y, x),
            FieldKind::Hook(f) => {
                let yf: Vec<f64> = y.iter().map(|v| v.to_f64_lossy()).collect();
                T::lit(f(&yf, x.to_f64_lossy()))
            }
        }
    }

    /// `log κ(y, x)`.
    pub fn eval_log_field<T: Real>(&self, y: &[T], x: T) -> Result<T, FieldError> {
        if y.len() != self.dprime {
            return Err(FieldError::DimensionMismatch {
                expected: self.dprime,
                got: y.len(),
            });
        }
        if !(x >= T::zero() && x <= T::one()) {
            return Err(FieldError::OutOfDomain { x: x.to_f64_lossy() });
        }
        let v = self.log_field_unchecked(y, x);
        if !v.is_finite() {
            return Err(FieldError::NonFinite { x: x.to_f64_lossy() });
        }
        Ok(v)
    }

    /// `κ(y, x) = exp(log κ(y, x))`.
    pub fn eval_kappa<T: Real>(&self, y: &[T], x: T) -> Result<T, FieldError> {
        self.eval_log_field(y, x).map(T::exp)
    }
}

fn check_smoothness(s: Smoothness) -> Result<(), FieldError> {
    match s {
        Smoothness::Finite(v) if !(v > 0.0 && v.is_finite()) => Err(FieldError::InvalidSmoothness(v)),
        _ => Ok(()),
    }
}
