//! The mean-constructor algebra: generator-based mean families closed under
//! fitting, conjugation, and symmetrization, with a single evaluation entry
//! point and a textual mini-language.
//!
//! Mini-language (normative for CLI flags and config files):
//!
//! ```text
//! spec := qa(phi="EXPR")
//!       | weighted(phi="EXPR", t=NUM)          -- t in (0,1)
//!       | examplek(phi="EXPR", t=NUM)          -- t in (0,1)
//!       | matkowski(f="EXPR", g="EXPR")
//!       | bajraktarevic(f="EXPR", g="EXPR")
//!       | cauchy(f="EXPR", g="EXPR")
//!       | fit(SPEC, SPEC) | conj(SPEC, phi="EXPR") | sym(SPEC)
//!       | min | max | proj1 | proj2
//! ```
//!
//! Every constituent shares one interval, supplied to [`make_mean`]. All
//! evaluators are reflexive by short-circuit (`eval(x, x) = x` exactly) and
//! accept arguments anywhere in the closed hull `[lo, hi]` as long as the
//! generators themselves evaluate there; inversions bracket on
//! `[min(x,y), max(x,y)]`, where the defining formulas guarantee a root.

use std::fmt;

use thiserror::Error;

use crate::genexpr::{
    differentiate, eval_expr, expr_to_numerics, parse_expr, validate_generator, ExprAst,
    ExprError, GenFn,
};
use crate::numerics::{
    solve_in, Interval, NumericsError, DEFAULT_MONOTONE_SAMPLES, DEFAULT_TOL,
};

#[derive(Debug, Clone, Error)]
pub enum MeanError {
    #[error("mean spec error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("invalid mean spec: {0}")]
    Invalid(String),

    #[error("argument {x} outside interval [{lo}, {hi}]")]
    OutsideDomain { x: f64, lo: f64, hi: f64 },

    #[error(transparent)]
    Numerics(#[from] NumericsError),

    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Syntactic description of a mean; validated and compiled by [`make_mean`].
#[derive(Debug, Clone, PartialEq)]
pub enum MeanSpec {
    QuasiArithmetic { phi: ExprAst },
    WeightedQa { phi: ExprAst, t: f64 },
    Matkowski { f: ExprAst, g: ExprAst },
    Bajraktarevic { f: ExprAst, g: ExprAst },
    Cauchy { f: ExprAst, g: ExprAst },
    Proj1,
    Proj2,
    Min,
    Max,
    Fitted { first: Box<MeanSpec>, second: Box<MeanSpec> },
    Conjugate { inner: Box<MeanSpec>, phi: ExprAst },
    Symmetrized { inner: Box<MeanSpec> },
    ExampleK { phi: ExprAst, t: f64 },
}

impl fmt::Display for MeanSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeanSpec::QuasiArithmetic { phi } => write!(f, "qa(phi=\"{phi}\")"),
            MeanSpec::WeightedQa { phi, t } => write!(f, "weighted(phi=\"{phi}\", t={t})"),
            MeanSpec::Matkowski { f: ff, g } => write!(f, "matkowski(f=\"{ff}\", g=\"{g}\")"),
            MeanSpec::Bajraktarevic { f: ff, g } => {
                write!(f, "bajraktarevic(f=\"{ff}\", g=\"{g}\")")
            }
            MeanSpec::Cauchy { f: ff, g } => write!(f, "cauchy(f=\"{ff}\", g=\"{g}\")"),
            MeanSpec::Proj1 => write!(f, "proj1"),
            MeanSpec::Proj2 => write!(f, "proj2"),
            MeanSpec::Min => write!(f, "min"),
            MeanSpec::Max => write!(f, "max"),
            MeanSpec::Fitted { first, second } => write!(f, "fit({first}, {second})"),
            MeanSpec::Conjugate { inner, phi } => write!(f, "conj({inner}, phi=\"{phi}\")"),
            MeanSpec::Symmetrized { inner } => write!(f, "sym({inner})"),
            MeanSpec::ExampleK { phi, t } => write!(f, "examplek(phi=\"{phi}\", t={t})"),
        }
    }
}

enum Kernel {
    Weighted { phi: GenFn, t: f64 },
    Matkowski { f: GenFn, g: GenFn },
    Bajraktarevic { f: ExprAst, g: ExprAst },
    Cauchy { f: ExprAst, g: ExprAst, df: ExprAst, dg: ExprAst },
    Proj1,
    Proj2,
    Min,
    Max,
    Fitted { first: Box<Kernel>, second: Box<Kernel> },
    Conjugate { inner: Box<Kernel>, inner_iv: Interval, phi: GenFn },
    Symmetrized { inner: Box<Kernel> },
    ExampleK { phi: GenFn, t: f64 },
}

/// A compiled, validated mean evaluator over its interval.
pub struct Mean {
    spec: MeanSpec,
    iv: Interval,
    tol: f64,
    kernel: Kernel,
}

impl fmt::Debug for Mean {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Mean")
            .field("spec", &self.spec.to_string())
            .field("iv", &self.iv)
            .field("tol", &self.tol)
            .finish_non_exhaustive()
    }
}

impl Mean {
    pub fn spec(&self) -> &MeanSpec {
        &self.spec
    }

    pub fn interval(&self) -> &Interval {
        &self.iv
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Replaces the inversion tolerance (default 1e-12 in the argument).
    pub fn with_tol(mut self, tol: f64) -> Self {
        assert!(tol > 0.0, "tolerance must be positive");
        self.tol = tol;
        self
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<f64, MeanError> {
        for z in [x, y] {
            if !self.iv.contains_closure(z) {
                return Err(MeanError::OutsideDomain {
                    x: z,
                    lo: self.iv.lo(),
                    hi: self.iv.hi(),
                });
            }
        }
        kernel_eval(&self.kernel, self.tol, x, y)
    }
}

/// Validates every constituent of `spec` over `iv` and compiles an evaluator.
pub fn make_mean(spec: &MeanSpec, iv: Interval) -> Result<Mean, MeanError> {
    let kernel = compile(spec, &iv)?;
    Ok(Mean {
        spec: spec.clone(),
        iv,
        tol: DEFAULT_TOL,
        kernel,
    })
}

/// Free-function form of [`Mean::eval`].
pub fn eval_mean(m: &Mean, x: f64, y: f64) -> Result<f64, MeanError> {
    m.eval(x, y)
}

fn validate(ast: &ExprAst, iv: &Interval, role: &str, spec: &MeanSpec) -> Result<GenFn, MeanError> {
    validate_generator(ast, iv)
        .map_err(|e| MeanError::Invalid(format!("{role} in {spec}: {e}")))
}

fn compile(spec: &MeanSpec, iv: &Interval) -> Result<Kernel, MeanError> {
    match spec {
        MeanSpec::QuasiArithmetic { phi } => Ok(Kernel::Weighted {
            phi: validate(phi, iv, "generator phi", spec)?,
            t: 0.5,
        }),
        MeanSpec::WeightedQa { phi, t } => {
            check_weight(*t, spec)?;
            Ok(Kernel::Weighted {
                phi: validate(phi, iv, "generator phi", spec)?,
                t: *t,
            })
        }
        MeanSpec::ExampleK { phi, t } => {
            check_weight(*t, spec)?;
            Ok(Kernel::ExampleK {
                phi: validate(phi, iv, "generator phi", spec)?,
                t: *t,
            })
        }
        MeanSpec::Matkowski { f, g } => {
            let fg = validate(f, iv, "generator f", spec)?;
            let gg = validate(g, iv, "generator g", spec)?;
            if fg.direction() != gg.direction() {
                return Err(MeanError::Invalid(format!(
                    "generators must be strictly monotone in the same sense in {spec}: \
                     f is {}, g is {}",
                    fg.direction(),
                    gg.direction()
                )));
            }
            Ok(Kernel::Matkowski { f: fg, g: gg })
        }
        MeanSpec::Bajraktarevic { f, g } => {
            check_nonvanishing(g, iv, "g", spec)?;
            check_ratio_monotone(
                &|x| {
                    let fx = eval_expr(f, x).map_err(expr_to_numerics(x))?;
                    let gx = eval_expr(g, x).map_err(expr_to_numerics(x))?;
                    Ok(fx / gx)
                },
                iv,
                "ratio f/g",
                spec,
            )?;
            Ok(Kernel::Bajraktarevic {
                f: f.clone(),
                g: g.clone(),
            })
        }
        MeanSpec::Cauchy { f, g } => {
            let df = differentiate(f);
            let dg = differentiate(g);
            check_nonvanishing(&dg, iv, "g'", spec)?;
            check_ratio_monotone(
                &|x| {
                    let a = eval_expr(&df, x).map_err(expr_to_numerics(x))?;
                    let b = eval_expr(&dg, x).map_err(expr_to_numerics(x))?;
                    Ok(a / b)
                },
                iv,
                "ratio f'/g'",
                spec,
            )?;
            Ok(Kernel::Cauchy {
                f: f.clone(),
                g: g.clone(),
                df,
                dg,
            })
        }
        MeanSpec::Proj1 => Ok(Kernel::Proj1),
        MeanSpec::Proj2 => Ok(Kernel::Proj2),
        MeanSpec::Min => Ok(Kernel::Min),
        MeanSpec::Max => Ok(Kernel::Max),
        MeanSpec::Fitted { first, second } => Ok(Kernel::Fitted {
            first: Box::new(compile(first, iv)?),
            second: Box::new(compile(second, iv)?),
        }),
        MeanSpec::Symmetrized { inner } => Ok(Kernel::Symmetrized {
            inner: Box::new(compile(inner, iv)?),
        }),
        MeanSpec::Conjugate { inner, phi } => {
            let phi = validate(phi, iv, "conjugating function phi", spec)?;
            let inner_iv = conjugate_image(&phi, iv)?;
            Ok(Kernel::Conjugate {
                inner: Box::new(compile(inner, &inner_iv)?),
                inner_iv,
                phi,
            })
        }
    }
}

fn check_weight(t: f64, spec: &MeanSpec) -> Result<(), MeanError> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(MeanError::Invalid(format!(
            "weight t = {t} outside (0, 1) in {spec}"
        )))
    }
}

fn check_nonvanishing(
    ast: &ExprAst,
    iv: &Interval,
    role: &str,
    spec: &MeanSpec,
) -> Result<(), MeanError> {
    let xs = iv.grid(DEFAULT_MONOTONE_SAMPLES);
    let mut prev: Option<f64> = None;
    for &x in &xs {
        let v = eval_expr(ast, x).map_err(|e| MeanError::Invalid(format!("{role} in {spec}: {e}")))?;
        if v == 0.0 {
            return Err(MeanError::Invalid(format!(
                "{role} vanishes at x = {x} in {spec}"
            )));
        }
        if let Some(p) = prev {
            if p.signum() != v.signum() {
                return Err(MeanError::Invalid(format!(
                    "{role} changes sign between samples near x = {x} in {spec}"
                )));
            }
        }
        prev = Some(v);
    }
    Ok(())
}

fn check_ratio_monotone(
    ratio: &dyn Fn(f64) -> Result<f64, NumericsError>,
    iv: &Interval,
    role: &str,
    spec: &MeanSpec,
) -> Result<(), MeanError> {
    use crate::numerics::{check_monotone, Monotonicity};
    match check_monotone(ratio, iv, DEFAULT_MONOTONE_SAMPLES)
        .map_err(|e| MeanError::Invalid(format!("{role} in {spec}: {e}")))?
    {
        Monotonicity::Monotone(_) => Ok(()),
        Monotonicity::Violation { x1, x2, f1, f2 } => Err(MeanError::Invalid(format!(
            "{role} is not invertible in {spec}: values {f1} at {x1} and {f2} at {x2}"
        ))),
    }
}

/// Image interval of the conjugating generator: the inner mean lives on
/// phi(I). Endpoints where phi fails to evaluate (e.g. log at 0) retreat by
/// half an inset step.
fn conjugate_image(phi: &GenFn, iv: &Interval) -> Result<Interval, MeanError> {
    let margin = 0.5 * iv.inset() * iv.width();
    let endpoint = |x: f64, fallback: f64| -> Result<f64, MeanError> {
        match phi.eval(x) {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Ok(phi.eval(fallback)?),
        }
    };
    let a = endpoint(iv.lo(), iv.lo() + margin)?;
    let b = endpoint(iv.hi(), iv.hi() - margin)?;
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    Interval::with_inset(lo, hi, iv.inset()).map_err(MeanError::from)
}

fn kernel_eval(kernel: &Kernel, tol: f64, x: f64, y: f64) -> Result<f64, MeanError> {
    if x == y {
        return Ok(x); // reflexivity, and no 0/0 in the Cauchy formula
    }
    match kernel {
        Kernel::Weighted { phi, t } => weighted_value(phi, *t, tol, x, y),
        Kernel::ExampleK { phi, t } => {
            // A_phi^t applied to (min, max).
            let (a, b) = sorted(x, y);
            weighted_value(phi, *t, tol, a, b)
        }
        Kernel::Matkowski { f, g } => {
            if f.is_identity() && g.is_identity() {
                return Ok(0.5 * x + 0.5 * y);
            }
            let (a, b) = sorted(x, y);
            let h = |s: f64| -> Result<f64, NumericsError> {
                let fs = f.eval(s).map_err(expr_to_numerics(s))?;
                let gs = g.eval(s).map_err(expr_to_numerics(s))?;
                Ok(fs + gs)
            };
            let target = f.eval(x)? + g.eval(y)?;
            invert_clamped(&h, target, a, b, tol)
        }
        Kernel::Bajraktarevic { f, g } => {
            let (a, b) = sorted(x, y);
            let ratio = |s: f64| -> Result<f64, NumericsError> {
                let fs = eval_expr(f, s).map_err(expr_to_numerics(s))?;
                let gs = eval_expr(g, s).map_err(expr_to_numerics(s))?;
                if gs == 0.0 {
                    return Err(NumericsError::Eval {
                        x: s,
                        reason: "g vanishes".into(),
                    });
                }
                Ok(fs / gs)
            };
            let den = eval_expr(g, x)? + eval_expr(g, y)?;
            if den == 0.0 {
                return Err(MeanError::Invalid(format!(
                    "g(x) + g(y) vanishes at ({x}, {y})"
                )));
            }
            let target = (eval_expr(f, x)? + eval_expr(f, y)?) / den;
            invert_clamped(&ratio, target, a, b, tol)
        }
        Kernel::Cauchy { f, g, df, dg } => {
            let (a, b) = sorted(x, y);
            let ratio = |s: f64| -> Result<f64, NumericsError> {
                let ds = eval_expr(df, s).map_err(expr_to_numerics(s))?;
                let es = eval_expr(dg, s).map_err(expr_to_numerics(s))?;
                if es == 0.0 {
                    return Err(NumericsError::Eval {
                        x: s,
                        reason: "g' vanishes".into(),
                    });
                }
                Ok(ds / es)
            };
            let den = eval_expr(g, x)? - eval_expr(g, y)?;
            if den == 0.0 {
                return Err(MeanError::Invalid(format!(
                    "g(x) - g(y) vanishes at ({x}, {y}) with x != y"
                )));
            }
            let target = (eval_expr(f, x)? - eval_expr(f, y)?) / den;
            invert_clamped(&ratio, target, a, b, tol)
        }
        Kernel::Proj1 => Ok(x),
        Kernel::Proj2 => Ok(y),
        Kernel::Min => Ok(x.min(y)),
        Kernel::Max => Ok(x.max(y)),
        Kernel::Fitted { first, second } => {
            if x <= y {
                kernel_eval(first, tol, x, y)
            } else {
                kernel_eval(second, tol, x, y)
            }
        }
        Kernel::Symmetrized { inner } => {
            let (a, b) = sorted(x, y);
            kernel_eval(inner, tol, a, b)
        }
        Kernel::Conjugate { inner, inner_iv, phi } => {
            let px = phi.eval(x)?;
            let py = phi.eval(y)?;
            for p in [px, py] {
                if !inner_iv.contains_closure(p) {
                    return Err(MeanError::Numerics(NumericsError::OutOfRange {
                        y: p,
                        min: inner_iv.lo(),
                        max: inner_iv.hi(),
                    }));
                }
            }
            let inner_val = kernel_eval(inner, tol, px, py)?;
            let (a, b) = sorted(x, y);
            let pf = |s: f64| phi.eval(s).map_err(expr_to_numerics(s));
            invert_clamped(&pf, inner_val, a, b, tol)
        }
    }
}

fn sorted(x: f64, y: f64) -> (f64, f64) {
    if x <= y {
        (x, y)
    } else {
        (y, x)
    }
}

/// Weighted quasi-arithmetic value `phi^{-1}(t phi(x) + (1-t) phi(y))`.
///
/// The identity generator gets the closed form `t x + (1-t) y`: no inversion
/// in the path, so e.g. arithmetic-mean defects can vanish exactly.
fn weighted_value(phi: &GenFn, t: f64, tol: f64, x: f64, y: f64) -> Result<f64, MeanError> {
    if phi.is_identity() {
        return Ok(t * x + (1.0 - t) * y);
    }
    let px = phi.eval(x)?;
    let py = phi.eval(y)?;
    let target = t * px + (1.0 - t) * py;
    let (a, b) = sorted(x, y);
    let pf = |s: f64| phi.eval(s).map_err(expr_to_numerics(s));
    invert_with_hull(&pf, target, (px, py), a, b, tol)
}

/// Quasi-arithmetic mean of `x` and `y` under a validated generator.
pub fn qa_value(phi: &GenFn, tol: f64, x: f64, y: f64) -> Result<f64, MeanError> {
    if x == y {
        return Ok(x);
    }
    weighted_value(phi, 0.5, tol, x, y)
}

/// Inverts `h` at `target` on the bracket `[a, b]`, clamping the target into
/// the evaluated hull `[h(a), h(b)]`. The defining mean formulas guarantee
/// the real-arithmetic target lies in that hull; the clamp only undoes
/// floating-point spill at the ends.
fn invert_clamped(
    h: &dyn Fn(f64) -> Result<f64, NumericsError>,
    target: f64,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64, MeanError> {
    let ha = h(a)?;
    let hb = h(b)?;
    invert_with_hull(h, target, (ha, hb), a, b, tol)
}

fn invert_with_hull(
    h: &dyn Fn(f64) -> Result<f64, NumericsError>,
    target: f64,
    hull: (f64, f64),
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64, MeanError> {
    let (mn, mx) = sorted(hull.0, hull.1);
    let t = target.clamp(mn, mx);
    Ok(solve_in(&|s| Ok(h(s)? - t), a, b, tol)?)
}

// ---------------------------------------------------------------------------
// Mini-language parser
// ---------------------------------------------------------------------------

pub fn parse_mean_spec(text: &str) -> Result<MeanSpec, MeanError> {
    let mut p = SpecParser {
        src: text.as_bytes(),
        text,
        pos: 0,
    };
    let spec = p.spec()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.err("end of input"));
    }
    Ok(spec)
}

enum Arg {
    Named { key: String, value: ArgValue, offset: usize },
    Positional(MeanSpec),
}

enum ArgValue {
    Text { content: String, offset: usize },
    Number(f64),
}

struct SpecParser<'a> {
    src: &'a [u8],
    text: &'a str,
    pos: usize,
}

impl<'a> SpecParser<'a> {
    fn err(&self, expected: &str) -> MeanError {
        MeanError::Parse {
            offset: self.pos,
            message: format!("expected {expected}"),
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

    fn ident(&mut self) -> Result<(String, usize), MeanError> {
        self.skip_ws();
        let start = self.pos;
        while self
            .src
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_')
        {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err("a constructor or parameter name"));
        }
        Ok((self.text[start..self.pos].to_string(), start))
    }

    fn spec(&mut self) -> Result<MeanSpec, MeanError> {
        let (name, name_at) = self.ident()?;
        let args = if self.peek() == Some(b'(') {
            self.pos += 1;
            let args = self.args()?;
            if self.peek() != Some(b')') {
                return Err(self.err("')' or ','"));
            }
            self.pos += 1;
            args
        } else {
            Vec::new()
        };
        self.build(&name, name_at, args)
    }

    fn args(&mut self) -> Result<Vec<Arg>, MeanError> {
        let mut out = Vec::new();
        if self.peek() == Some(b')') {
            return Ok(out);
        }
        loop {
            out.push(self.arg()?);
            if self.peek() == Some(b',') {
                self.pos += 1;
            } else {
                return Ok(out);
            }
        }
    }

    fn arg(&mut self) -> Result<Arg, MeanError> {
        let save = self.pos;
        let (word, word_at) = self.ident()?;
        if self.peek() == Some(b'=') {
            self.pos += 1;
            let value = self.value()?;
            return Ok(Arg::Named {
                key: word,
                value,
                offset: word_at,
            });
        }
        self.pos = save;
        Ok(Arg::Positional(self.spec()?))
    }

    fn value(&mut self) -> Result<ArgValue, MeanError> {
        match self.peek() {
            Some(b'"') => {
                self.pos += 1;
                let start = self.pos;
                while self.src.get(self.pos).is_some_and(|c| *c != b'"') {
                    self.pos += 1;
                }
                if self.src.get(self.pos) != Some(&b'"') {
                    return Err(self.err("closing '\"'"));
                }
                let content = self.text[start..self.pos].to_string();
                self.pos += 1;
                Ok(ArgValue::Text {
                    content,
                    offset: start,
                })
            }
            Some(c) if c.is_ascii_digit() || c == b'.' || c == b'-' || c == b'+' => {
                let start = self.pos;
                self.pos += 1;
                while self.src.get(self.pos).is_some_and(|c| {
                    c.is_ascii_digit() || matches!(*c, b'.' | b'e' | b'E' | b'+' | b'-')
                }) {
                    self.pos += 1;
                }
                let text = &self.text[start..self.pos];
                let n = text.parse::<f64>().map_err(|_| MeanError::Parse {
                    offset: start,
                    message: format!("invalid number '{text}'"),
                })?;
                Ok(ArgValue::Number(n))
            }
            _ => Err(self.err("a quoted expression or a number")),
        }
    }

    fn build(&self, name: &str, name_at: usize, args: Vec<Arg>) -> Result<MeanSpec, MeanError> {
        let parse_err = |offset: usize, message: String| MeanError::Parse { offset, message };
        let mut named: Vec<(String, ArgValue, usize)> = Vec::new();
        let mut positional: Vec<MeanSpec> = Vec::new();
        for a in args {
            match a {
                Arg::Named { key, value, offset } => named.push((key, value, offset)),
                Arg::Positional(s) => positional.push(s),
            }
        }
        let mut expr_param = |key: &str| -> Result<ExprAst, MeanError> {
            let idx = named
                .iter()
                .position(|(k, _, _)| k == key)
                .ok_or_else(|| parse_err(name_at, format!("{name} requires parameter {key}=\"...\"")))?;
            let (_, value, offset) = named.remove(idx);
            match value {
                ArgValue::Text { content, offset } => parse_expr(&content).map_err(|e| match e {
                    ExprError::Syntax { offset: inner, expected } => parse_err(
                        offset + inner,
                        format!("in expression parameter {key}: expected {expected}"),
                    ),
                    other => parse_err(offset, other.to_string()),
                }),
                ArgValue::Number(_) => Err(parse_err(
                    offset,
                    format!("{key} must be a quoted expression"),
                )),
            }
        };
        let spec = match name {
            "qa" => MeanSpec::QuasiArithmetic { phi: expr_param("phi")? },
            "weighted" | "examplek" => {
                let phi = expr_param("phi")?;
                let t_idx = named
                    .iter()
                    .position(|(k, _, _)| k == "t")
                    .ok_or_else(|| parse_err(name_at, format!("{name} requires parameter t")))?;
                let (_, value, offset) = named.remove(t_idx);
                let t = match value {
                    ArgValue::Number(n) => n,
                    ArgValue::Text { offset, .. } => {
                        return Err(parse_err(offset, "t must be a number".into()))
                    }
                };
                if !(t > 0.0 && t < 1.0) {
                    return Err(parse_err(offset, format!("t = {t} outside (0, 1)")));
                }
                if name == "weighted" {
                    MeanSpec::WeightedQa { phi, t }
                } else {
                    MeanSpec::ExampleK { phi, t }
                }
            }
            "matkowski" => MeanSpec::Matkowski { f: expr_param("f")?, g: expr_param("g")? },
            "bajraktarevic" => {
                MeanSpec::Bajraktarevic { f: expr_param("f")?, g: expr_param("g")? }
            }
            "cauchy" => MeanSpec::Cauchy { f: expr_param("f")?, g: expr_param("g")? },
            "fit" => {
                if positional.len() != 2 {
                    return Err(parse_err(name_at, "fit requires two mean arguments".into()));
                }
                let second = positional.pop().unwrap();
                let first = positional.pop().unwrap();
                MeanSpec::Fitted { first: Box::new(first), second: Box::new(second) }
            }
            "conj" => {
                if positional.len() != 1 {
                    return Err(parse_err(name_at, "conj requires one mean argument".into()));
                }
                MeanSpec::Conjugate {
                    inner: Box::new(positional.pop().unwrap()),
                    phi: expr_param("phi")?,
                }
            }
            "sym" => {
                if positional.len() != 1 {
                    return Err(parse_err(name_at, "sym requires one mean argument".into()));
                }
                MeanSpec::Symmetrized { inner: Box::new(positional.pop().unwrap()) }
            }
            "min" => MeanSpec::Min,
            "max" => MeanSpec::Max,
            "proj1" => MeanSpec::Proj1,
            "proj2" => MeanSpec::Proj2,
            other => {
                return Err(parse_err(
                    name_at,
                    format!("unknown mean constructor '{other}'"),
                ))
            }
        };
        if let Some((key, _, offset)) = named.first() {
            return Err(parse_err(*offset, format!("unexpected parameter '{key}'")));
        }
        if !positional.is_empty() && !matches!(name, "fit" | "conj" | "sym") {
            return Err(parse_err(
                name_at,
                format!("{name} takes no positional mean arguments"),
            ));
        }
        Ok(spec)
    }
}
