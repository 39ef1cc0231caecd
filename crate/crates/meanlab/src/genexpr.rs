//! A small expression language for generator functions: recursive-descent
//! parser, evaluator, and symbolic differentiator.
//!
//! Grammar (normative for CLI flags and config files):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := atom ('^' factor)?            -- '^' is right-associative
//! atom   := number | 'x' | fn '(' expr ')' | '(' expr ')' | '-' atom
//! fn     := 'log' | 'exp' | 'sqrt' | 'abs'
//! ```
//!
//! Numbers are decimal with an optional exponent (`2`, `0.5`, `1e-3`). The
//! only variable is `x`; the language is deliberately closed so the
//! differentiator stays total.

use std::fmt;

use thiserror::Error;

use crate::numerics::{check_monotone, Direction, Interval, Monotonicity, NumericsError, ScalarFn};
use crate::numerics::DEFAULT_MONOTONE_SAMPLES;

#[derive(Debug, Clone, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: expected {expected}")]
    Syntax { offset: usize, expected: String },

    #[error("domain error at x = {x}: {reason}")]
    Domain { x: f64, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryFn {
    Log,
    Exp,
    Sqrt,
    Abs,
}

impl UnaryFn {
    fn name(self) -> &'static str {
        match self {
            UnaryFn::Log => "log",
            UnaryFn::Exp => "exp",
            UnaryFn::Sqrt => "sqrt",
            UnaryFn::Abs => "abs",
        }
    }
}

/// Abstract syntax tree over one real variable `x`.
#[derive(Debug, Clone, PartialEq)]
pub enum ExprAst {
    Num(f64),
    Var,
    Neg(Box<ExprAst>),
    Add(Box<ExprAst>, Box<ExprAst>),
    Sub(Box<ExprAst>, Box<ExprAst>),
    Mul(Box<ExprAst>, Box<ExprAst>),
    Div(Box<ExprAst>, Box<ExprAst>),
    Pow(Box<ExprAst>, Box<ExprAst>),
    Call(UnaryFn, Box<ExprAst>),
}

impl ExprAst {
    /// True for the bare variable `x`; identity generators get closed-form
    /// fast paths downstream.
    pub fn is_identity(&self) -> bool {
        matches!(self, ExprAst::Var)
    }
}

pub fn parse_expr(text: &str) -> Result<ExprAst, ExprError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    let ast = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.err("an operator or end of input"));
    }
    Ok(ast)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, expected: &str) -> ExprError {
        ExprError::Syntax {
            offset: self.pos,
            expected: expected.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.src.get(self.pos).is_some_and(|c| c.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<ExprAst, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = ExprAst::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = ExprAst::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<ExprAst, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = ExprAst::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = ExprAst::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<ExprAst, ExprError> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exponent = self.factor()?; // right-associative
            return Ok(ExprAst::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<ExprAst, ExprError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("')'"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(b'-') => {
                self.pos += 1;
                self.skip_ws();
                // A literal directly after unary minus folds into a negative
                // number, so printing `Num(-2.0)` as "-2" round-trips.
                if self.src.get(self.pos).is_some_and(|c| c.is_ascii_digit() || *c == b'.') {
                    let n = self.number()?;
                    return Ok(ExprAst::Num(-n));
                }
                Ok(ExprAst::Neg(Box::new(self.atom()?)))
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => Ok(ExprAst::Num(self.number()?)),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self
                    .src
                    .get(self.pos)
                    .is_some_and(|c| c.is_ascii_alphanumeric())
                {
                    self.pos += 1;
                }
                let ident = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                if ident == "x" {
                    return Ok(ExprAst::Var);
                }
                let f = match ident {
                    "log" => UnaryFn::Log,
                    "exp" => UnaryFn::Exp,
                    "sqrt" => UnaryFn::Sqrt,
                    "abs" => UnaryFn::Abs,
                    _ => {
                        self.pos = start;
                        return Err(self.err("'x', 'log', 'exp', 'sqrt', or 'abs'"));
                    }
                };
                if self.peek() != Some(b'(') {
                    return Err(self.err("'(' after function name"));
                }
                self.pos += 1;
                let arg = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("')'"));
                }
                self.pos += 1;
                Ok(ExprAst::Call(f, Box::new(arg)))
            }
            _ => Err(self.err("a number, 'x', a function call, '(', or '-'")),
        }
    }

    fn number(&mut self) -> Result<f64, ExprError> {
        let start = self.pos;
        while self.src.get(self.pos).is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            while self.src.get(self.pos).is_some_and(|c| c.is_ascii_digit()) {
                self.pos += 1;
            }
        }
        if matches!(self.src.get(self.pos), Some(b'e') | Some(b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+') | Some(b'-')) {
                self.pos += 1;
            }
            if self.src.get(self.pos).is_some_and(|c| c.is_ascii_digit()) {
                while self.src.get(self.pos).is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                self.pos = mark; // "2e" is the number 2 followed by junk
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<f64>().map_err(|_| ExprError::Syntax {
            offset: start,
            expected: "a numeric literal".to_string(),
        })
    }
}

pub fn eval_expr(ast: &ExprAst, x: f64) -> Result<f64, ExprError> {
    let check = |v: f64| -> Result<f64, ExprError> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::Domain {
                x,
                reason: format!("non-finite intermediate value {v}"),
            })
        }
    };
    match ast {
        ExprAst::Num(n) => check(*n),
        ExprAst::Var => check(x),
        ExprAst::Neg(a) => Ok(-eval_expr(a, x)?),
        ExprAst::Add(a, b) => check(eval_expr(a, x)? + eval_expr(b, x)?),
        ExprAst::Sub(a, b) => check(eval_expr(a, x)? - eval_expr(b, x)?),
        ExprAst::Mul(a, b) => check(eval_expr(a, x)? * eval_expr(b, x)?),
        ExprAst::Div(a, b) => {
            let den = eval_expr(b, x)?;
            if den == 0.0 {
                return Err(ExprError::Domain {
                    x,
                    reason: "division by zero".to_string(),
                });
            }
            check(eval_expr(a, x)? / den)
        }
        ExprAst::Pow(a, b) => check(eval_expr(a, x)?.powf(eval_expr(b, x)?)),
        ExprAst::Call(f, a) => {
            let v = eval_expr(a, x)?;
            match f {
                UnaryFn::Log => {
                    if v <= 0.0 {
                        return Err(ExprError::Domain {
                            x,
                            reason: format!("log of non-positive argument {v}"),
                        });
                    }
                    check(v.ln())
                }
                UnaryFn::Exp => check(v.exp()),
                UnaryFn::Sqrt => {
                    if v < 0.0 {
                        return Err(ExprError::Domain {
                            x,
                            reason: format!("sqrt of negative argument {v}"),
                        });
                    }
                    check(v.sqrt())
                }
                UnaryFn::Abs => check(v.abs()),
            }
        }
    }
}

// Size-reducing constructors so derivatives of products and quotients do not
// balloon with zero and one factors.
fn num(n: f64) -> ExprAst {
    ExprAst::Num(n)
}

fn add(a: ExprAst, b: ExprAst) -> ExprAst {
    match (a, b) {
        (ExprAst::Num(z), b) if z == 0.0 => b,
        (a, ExprAst::Num(z)) if z == 0.0 => a,
        (a, b) => ExprAst::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: ExprAst, b: ExprAst) -> ExprAst {
    match (a, b) {
        (a, ExprAst::Num(z)) if z == 0.0 => a,
        (ExprAst::Num(z), b) if z == 0.0 => ExprAst::Neg(Box::new(b)),
        (a, b) => ExprAst::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: ExprAst, b: ExprAst) -> ExprAst {
    match (a, b) {
        (ExprAst::Num(z), _) | (_, ExprAst::Num(z)) if z == 0.0 => num(0.0),
        (ExprAst::Num(o), b) if o == 1.0 => b,
        (a, ExprAst::Num(o)) if o == 1.0 => a,
        (a, b) => ExprAst::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: ExprAst, b: ExprAst) -> ExprAst {
    match (a, b) {
        (ExprAst::Num(z), b) if z == 0.0 && !matches!(b, ExprAst::Num(n) if n == 0.0) => num(0.0),
        (a, ExprAst::Num(o)) if o == 1.0 => a,
        (a, b) => ExprAst::Div(Box::new(a), Box::new(b)),
    }
}

fn call(f: UnaryFn, a: ExprAst) -> ExprAst {
    ExprAst::Call(f, Box::new(a))
}

/// Symbolic derivative by the standard rules.
///
/// `a ^ b` with a non-literal exponent is rewritten as `exp(b * log(a))`
/// first; the emitted `log(a)` carries the `a > 0` domain restriction into
/// every later evaluation. The derivative of `abs` at 0 is a division by
/// zero, reported when the result is evaluated there.
pub fn differentiate(ast: &ExprAst) -> ExprAst {
    match ast {
        ExprAst::Num(_) => num(0.0),
        ExprAst::Var => num(1.0),
        ExprAst::Neg(a) => match differentiate(a) {
            ExprAst::Num(z) if z == 0.0 => num(0.0),
            d => ExprAst::Neg(Box::new(d)),
        },
        ExprAst::Add(a, b) => add(differentiate(a), differentiate(b)),
        ExprAst::Sub(a, b) => sub(differentiate(a), differentiate(b)),
        ExprAst::Mul(a, b) => add(
            mul(differentiate(a), (**b).clone()),
            mul((**a).clone(), differentiate(b)),
        ),
        ExprAst::Div(a, b) => div(
            sub(
                mul(differentiate(a), (**b).clone()),
                mul((**a).clone(), differentiate(b)),
            ),
            mul((**b).clone(), (**b).clone()),
        ),
        ExprAst::Pow(a, b) => match **b {
            // d/dx a^c = c * a^(c-1) * a'
            ExprAst::Num(c) => mul(
                mul(num(c), ExprAst::Pow(a.clone(), Box::new(num(c - 1.0)))),
                differentiate(a),
            ),
            // General exponent: a^b = exp(b * log(a)), restricting to a > 0.
            _ => differentiate(&call(
                UnaryFn::Exp,
                mul((**b).clone(), call(UnaryFn::Log, (**a).clone())),
            )),
        },
        ExprAst::Call(f, a) => {
            let da = differentiate(a);
            match f {
                UnaryFn::Log => div(da, (**a).clone()),
                UnaryFn::Exp => mul(da, call(UnaryFn::Exp, (**a).clone())),
                UnaryFn::Sqrt => div(da, mul(num(2.0), call(UnaryFn::Sqrt, (**a).clone()))),
                UnaryFn::Abs => mul(
                    da,
                    div((**a).clone(), call(UnaryFn::Abs, (**a).clone())),
                ),
            }
        }
    }
}

// Precedence-aware printer. Reparsing the output reproduces the tree
// structurally, which is what the round-trip property test checks.
fn prec(ast: &ExprAst) -> u8 {
    match ast {
        ExprAst::Add(..) | ExprAst::Sub(..) => 1,
        ExprAst::Mul(..) | ExprAst::Div(..) => 2,
        ExprAst::Pow(..) => 3,
        _ => 4,
    }
}

fn fmt_child(f: &mut fmt::Formatter<'_>, child: &ExprAst, min_prec: u8) -> fmt::Result {
    if prec(child) < min_prec {
        write!(f, "({child})")
    } else {
        write!(f, "{child}")
    }
}

impl fmt::Display for ExprAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExprAst::Num(n) => write!(f, "{n}"),
            ExprAst::Var => write!(f, "x"),
            ExprAst::Neg(a) => {
                // "-(2)" keeps Neg(Num) distinct from the folded literal "-2".
                if matches!(**a, ExprAst::Num(_)) {
                    write!(f, "-({a})")
                } else {
                    write!(f, "-")?;
                    fmt_child(f, a, 4)
                }
            }
            ExprAst::Add(a, b) => {
                fmt_child(f, a, 1)?;
                write!(f, " + ")?;
                fmt_child(f, b, 2)
            }
            ExprAst::Sub(a, b) => {
                fmt_child(f, a, 1)?;
                write!(f, " - ")?;
                fmt_child(f, b, 2)
            }
            ExprAst::Mul(a, b) => {
                fmt_child(f, a, 2)?;
                write!(f, "*")?;
                fmt_child(f, b, 3)
            }
            ExprAst::Div(a, b) => {
                fmt_child(f, a, 2)?;
                write!(f, "/")?;
                fmt_child(f, b, 3)
            }
            ExprAst::Pow(a, b) => {
                fmt_child(f, a, 4)?;
                write!(f, "^")?;
                fmt_child(f, b, 3)
            }
            ExprAst::Call(g, a) => write!(f, "{}({a})", g.name()),
        }
    }
}

/// A validated generator: parsed expression, domain, certified direction,
/// and the symbolic derivative.
#[derive(Debug, Clone)]
pub struct GenFn {
    ast: ExprAst,
    derivative: Option<ExprAst>,
    domain: Interval,
    direction: Direction,
}

impl GenFn {
    pub fn ast(&self) -> &ExprAst {
        &self.ast
    }

    pub fn derivative(&self) -> Option<&ExprAst> {
        self.derivative.as_ref()
    }

    pub fn domain(&self) -> &Interval {
        &self.domain
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn is_identity(&self) -> bool {
        self.ast.is_identity()
    }

    pub fn eval(&self, x: f64) -> Result<f64, ExprError> {
        eval_expr(&self.ast, x)
    }

    /// View as a numerics-level scalar function for inversion.
    pub fn to_scalar_fn(&self) -> ScalarFn {
        let ast = self.ast.clone();
        ScalarFn::from_parts(
            move |x| eval_expr(&ast, x).map_err(expr_to_numerics(x)),
            self.domain,
            self.direction,
        )
    }
}

pub(crate) fn expr_to_numerics(x: f64) -> impl Fn(ExprError) -> NumericsError {
    move |e| NumericsError::Eval {
        x,
        reason: e.to_string(),
    }
}

/// Admission gate for generators: wraps the expression over the interval,
/// certifies strict monotonicity by sampling, and records the direction.
pub fn validate_generator(ast: &ExprAst, iv: &Interval) -> Result<GenFn, NumericsError> {
    let eval = |x: f64| eval_expr(ast, x).map_err(expr_to_numerics(x));
    match check_monotone(&eval, iv, DEFAULT_MONOTONE_SAMPLES)? {
        Monotonicity::Monotone(direction) => Ok(GenFn {
            ast: ast.clone(),
            derivative: Some(differentiate(ast)),
            domain: *iv,
            direction,
        }),
        Monotonicity::Violation { x1, x2, f1, f2 } => {
            Err(NumericsError::NotMonotone { x1, x2, f1, f2 })
        }
    }
}
