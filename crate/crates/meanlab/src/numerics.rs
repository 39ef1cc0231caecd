//! Interval arithmetic, bracketed root finding, and numerical inversion of
//! monotone scalar functions.
//!
//! Everything downstream (mean evaluation, defect grids, orbit iteration)
//! reduces to the three operations here: [`check_monotone`],
//! [`solve_bracketed`], and [`invert_monotone`]. All routines work on the
//! *inset* closed sub-interval of an open interval, so open endpoints never
//! have to be evaluated.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Default relative inset used to shrink an open interval to a closed working
/// interval.
pub const DEFAULT_INSET: f64 = 1e-6;

/// Default absolute tolerance (in the argument) for root finding / inversion.
pub const DEFAULT_TOL: f64 = 1e-12;

/// Default sample count for monotonicity validation.
pub const DEFAULT_MONOTONE_SAMPLES: usize = 1024;

#[derive(Debug, Clone, Error)]
pub enum NumericsError {
    #[error("invalid interval ({lo}, {hi}): {reason}")]
    InvalidInterval { lo: f64, hi: f64, reason: String },

    #[error("evaluation failed at x = {x}: {reason}")]
    Eval { x: f64, reason: String },

    #[error("non-finite value {value} at x = {x}")]
    NonFinite { x: f64, value: f64 },

    #[error("not strictly monotone: f({x1}) = {f1} and f({x2}) = {f2}")]
    NotMonotone { x1: f64, x2: f64, f1: f64, f2: f64 },

    #[error("no sign change on [{lo}, {hi}]: g(lo) = {g_lo}, g(hi) = {g_hi}")]
    NoSignChange { lo: f64, hi: f64, g_lo: f64, g_hi: f64 },

    #[error("target {y} outside attainable range [{min}, {max}]")]
    OutOfRange { y: f64, min: f64, max: f64 },
}

/// An open bounded interval (lo, hi) together with a relative inset.
///
/// Sampling, bracketing, and grid construction all happen on the closed
/// working interval `[lo + inset*(hi-lo), hi - inset*(hi-lo)]`, which keeps
/// generators like `log` evaluable even when they blow up at an endpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
    inset: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, NumericsError> {
        Self::with_inset(lo, hi, DEFAULT_INSET)
    }

    pub fn with_inset(lo: f64, hi: f64, inset: f64) -> Result<Self, NumericsError> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(NumericsError::InvalidInterval {
                lo,
                hi,
                reason: "endpoints must be finite".into(),
            });
        }
        if !(lo < hi) {
            return Err(NumericsError::InvalidInterval {
                lo,
                hi,
                reason: "lo must be strictly less than hi".into(),
            });
        }
        if !(inset > 0.0 && inset <= 0.01) {
            return Err(NumericsError::InvalidInterval {
                lo,
                hi,
                reason: format!("inset {inset} outside (0, 0.01]"),
            });
        }
        let iv = Interval { lo, hi, inset };
        if !(iv.work_lo() < iv.work_hi()) {
            return Err(NumericsError::InvalidInterval {
                lo,
                hi,
                reason: "working interval is empty".into(),
            });
        }
        Ok(iv)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn inset(&self) -> f64 {
        self.inset
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Lower end of the closed working interval.
    pub fn work_lo(&self) -> f64 {
        self.lo + self.inset * self.width()
    }

    /// Upper end of the closed working interval.
    pub fn work_hi(&self) -> f64 {
        self.hi - self.inset * self.width()
    }

    /// Membership in the open interval (lo, hi).
    pub fn contains(&self, x: f64) -> bool {
        self.lo < x && x < self.hi
    }

    /// Membership in the closed hull [lo, hi].
    pub fn contains_closure(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn clamp_to_working(&self, x: f64) -> f64 {
        x.clamp(self.work_lo(), self.work_hi())
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Evenly spaced points over the working interval, endpoints included.
    ///
    /// Points are generated as `work_lo + i*step` so that grids are
    /// bit-reproducible across runs.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        assert!(n >= 1, "grid needs at least one point");
        if n == 1 {
            return vec![self.midpoint()];
        }
        let a = self.work_lo();
        let step = (self.work_hi() - a) / (n - 1) as f64;
        (0..n).map(|i| a + i as f64 * step).collect()
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Increasing,
    Decreasing,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Increasing => 1.0,
            Direction::Decreasing => -1.0,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Direction::Increasing => write!(f, "increasing"),
            Direction::Decreasing => write!(f, "decreasing"),
        }
    }
}

/// Outcome of a monotonicity scan: either a direction or the first
/// adjacent sample pair that violates strict ordering.
#[derive(Debug, Clone, PartialEq)]
pub enum Monotonicity {
    Monotone(Direction),
    Violation { x1: f64, x2: f64, f1: f64, f2: f64 },
}

type DynFn<'a> = &'a dyn Fn(f64) -> Result<f64, NumericsError>;

/// Samples `f` at `n` points of the working interval and classifies it as
/// strictly increasing, strictly decreasing, or neither.
///
/// After the coarse scan passes, one adaptive refinement pass re-samples the
/// adjacent pair with the smallest value gap; this catches shallow local
/// extrema between coarse samples. The result is a sampling certificate, not
/// a proof.
pub fn check_monotone(
    f: DynFn,
    iv: &Interval,
    n: usize,
) -> Result<Monotonicity, NumericsError> {
    assert!(n >= 3, "monotonicity scan needs at least 3 samples");
    let xs = iv.grid(n);
    let mut ys = Vec::with_capacity(n);
    for &x in &xs {
        let y = f(x)?;
        if !y.is_finite() {
            return Err(NumericsError::NonFinite { x, value: y });
        }
        ys.push(y);
    }
    let scan = classify(&xs, &ys);
    let dir = match scan {
        Monotonicity::Monotone(dir) => dir,
        violation => return Ok(violation),
    };

    // Refinement: zoom into the flattest adjacent pair and rescan it.
    let mut tight = 0;
    let mut tight_gap = f64::INFINITY;
    for i in 0..n - 1 {
        let gap = (ys[i + 1] - ys[i]).abs();
        if gap < tight_gap {
            tight_gap = gap;
            tight = i;
        }
    }
    let (a, b) = (xs[tight], xs[tight + 1]);
    let step = (b - a) / (n - 1) as f64;
    let fine_xs: Vec<f64> = (0..n).map(|i| a + i as f64 * step).collect();
    let mut fine_ys = Vec::with_capacity(n);
    for &x in &fine_xs {
        let y = f(x)?;
        if !y.is_finite() {
            return Err(NumericsError::NonFinite { x, value: y });
        }
        fine_ys.push(y);
    }
    match classify(&fine_xs, &fine_ys) {
        Monotonicity::Monotone(d) if d == dir => Ok(Monotonicity::Monotone(dir)),
        Monotonicity::Monotone(_) => Ok(Monotonicity::Violation {
            x1: a,
            x2: b,
            f1: ys[tight],
            f2: ys[tight + 1],
        }),
        violation => Ok(violation),
    }
}

fn classify(xs: &[f64], ys: &[f64]) -> Monotonicity {
    let up = ys[1] > ys[0];
    for i in 0..xs.len() - 1 {
        let ordered = if up {
            ys[i + 1] > ys[i]
        } else {
            ys[i + 1] < ys[i]
        };
        if !ordered {
            return Monotonicity::Violation {
                x1: xs[i],
                x2: xs[i + 1],
                f1: ys[i],
                f2: ys[i + 1],
            };
        }
    }
    Monotonicity::Monotone(if up {
        Direction::Increasing
    } else {
        Direction::Decreasing
    })
}

/// A real scalar function bundled with its domain and a certified monotone
/// direction.
#[derive(Clone)]
pub struct ScalarFn {
    f: Arc<dyn Fn(f64) -> Result<f64, NumericsError> + Send + Sync>,
    domain: Interval,
    direction: Direction,
}

impl ScalarFn {
    /// Builds a `ScalarFn` after certifying monotonicity by sampling.
    pub fn validated<F>(f: F, domain: Interval, samples: usize) -> Result<Self, NumericsError>
    where
        F: Fn(f64) -> Result<f64, NumericsError> + Send + Sync + 'static,
    {
        match check_monotone(&f, &domain, samples)? {
            Monotonicity::Monotone(direction) => Ok(ScalarFn {
                f: Arc::new(f),
                domain,
                direction,
            }),
            Monotonicity::Violation { x1, x2, f1, f2 } => {
                Err(NumericsError::NotMonotone { x1, x2, f1, f2 })
            }
        }
    }

    /// Builds a `ScalarFn` from parts the caller already knows to be
    /// monotone (e.g. the sum of two same-direction generators).
    pub fn from_parts<F>(f: F, domain: Interval, direction: Direction) -> Self
    where
        F: Fn(f64) -> Result<f64, NumericsError> + Send + Sync + 'static,
    {
        ScalarFn {
            f: Arc::new(f),
            domain,
            direction,
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64, NumericsError> {
        let y = (self.f)(x)?;
        if !y.is_finite() {
            return Err(NumericsError::NonFinite { x, value: y });
        }
        Ok(y)
    }

    pub fn domain(&self) -> &Interval {
        &self.domain
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarFn")
            .field("domain", &self.domain)
            .field("direction", &self.direction)
            .finish_non_exhaustive()
    }
}

/// Finds a root of `g` inside the explicit bracket `[a, b]`.
///
/// Bisection interleaved with secant steps: the bracket is maintained at
/// every iteration and shrinks by at least half every two iterations, so the
/// loop terminates with `|x - root| <= tol` for continuous sign-changing `g`.
pub fn solve_in(
    g: &dyn Fn(f64) -> Result<f64, NumericsError>,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64, NumericsError> {
    assert!(tol > 0.0, "tolerance must be positive");
    let (mut lo, mut hi) = if a <= b { (a, b) } else { (b, a) };
    let eval = |x: f64| -> Result<f64, NumericsError> {
        let y = g(x)?;
        if !y.is_finite() {
            return Err(NumericsError::NonFinite { x, value: y });
        }
        Ok(y)
    };
    let mut g_lo = eval(lo)?;
    if g_lo == 0.0 {
        return Ok(lo);
    }
    let mut g_hi = eval(hi)?;
    if g_hi == 0.0 {
        return Ok(hi);
    }
    if g_lo.signum() == g_hi.signum() {
        return Err(NumericsError::NoSignChange {
            lo,
            hi,
            g_lo,
            g_hi,
        });
    }

    let mut secant_turn = true;
    // 2*53 bisection halvings already reach one ulp; 256 is pure headroom.
    for _ in 0..256 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let x = if secant_turn {
            let s = hi - g_hi * (hi - lo) / (g_hi - g_lo);
            if s.is_finite() && s > lo && s < hi {
                s
            } else {
                mid
            }
        } else {
            mid
        };
        secant_turn = !secant_turn;
        if x <= lo || x >= hi {
            break; // bracket narrower than f64 spacing
        }
        let gx = eval(x)?;
        if gx == 0.0 {
            return Ok(x);
        }
        if gx.signum() == g_lo.signum() {
            lo = x;
            g_lo = gx;
        } else {
            hi = x;
            g_hi = gx;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Finds a root of `g` on the working interval of `iv`.
///
/// `g` must change sign between the working endpoints.
pub fn solve_bracketed(
    g: &dyn Fn(f64) -> Result<f64, NumericsError>,
    iv: &Interval,
    tol: f64,
) -> Result<f64, NumericsError> {
    solve_in(g, iv.work_lo(), iv.work_hi(), tol)
}

/// Solves `f(x) = y` for a validated monotone `f`, bracketing on its working
/// interval. Direction-aware: reports the attainable range when `y` lies
/// outside `f`(working interval).
pub fn invert_monotone(f: &ScalarFn, y: f64, tol: f64) -> Result<f64, NumericsError> {
    let lo = f.domain().work_lo();
    let hi = f.domain().work_hi();
    let f_lo = f.eval(lo)?;
    let f_hi = f.eval(hi)?;
    let (min, max) = if f_lo <= f_hi { (f_lo, f_hi) } else { (f_hi, f_lo) };
    if y < min || y > max {
        return Err(NumericsError::OutOfRange { y, min, max });
    }
    if y == f_lo {
        return Ok(lo);
    }
    if y == f_hi {
        return Ok(hi);
    }
    solve_in(&|x| Ok(f.eval(x)? - y), lo, hi, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Lcg;
    use proptest::prelude::*;

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    /// Plain bisection, no acceleration: the independent oracle solve_in is
    /// checked against.
    fn pure_bisect(g: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
        let mut g_lo = g(lo);
        assert!(g_lo.signum() != g(hi).signum() || g_lo == 0.0 || g(hi) == 0.0);
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            let gm = g(mid);
            if gm == 0.0 {
                return mid;
            }
            if gm.signum() == g_lo.signum() {
                lo = mid;
                g_lo = gm;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn interval_rejects_bad_bounds() {
        assert!(Interval::new(1.0, 1.0).is_err());
        assert!(Interval::new(2.0, 1.0).is_err());
        assert!(Interval::new(f64::NEG_INFINITY, 1.0).is_err());
        assert!(Interval::with_inset(0.0, 1.0, 0.0).is_err());
        assert!(Interval::with_inset(0.0, 1.0, 0.02).is_err());
    }

    #[test]
    fn working_interval_is_inset() {
        let i = iv(0.0, 1.0);
        assert!((i.work_lo() - 1e-6).abs() < 1e-18);
        assert!((i.work_hi() - (1.0 - 1e-6)).abs() < 1e-18);
        assert_eq!(i.grid(3).len(), 3);
        assert_eq!(i.grid(3)[0], i.work_lo());
        assert_eq!(i.grid(3)[2], i.work_hi());
    }

    #[test]
    fn monotone_cube_is_increasing() {
        let got = check_monotone(&|x| Ok(x * x * x), &iv(-2.0, 2.0), 64).unwrap();
        assert_eq!(got, Monotonicity::Monotone(Direction::Increasing));
    }

    #[test]
    fn parabola_yields_violation_straddling_vertex() {
        let got = check_monotone(&|x| Ok(x * x), &iv(-1.0, 1.0), 64).unwrap();
        match got {
            Monotonicity::Violation { x1, x2, .. } => {
                assert!(x1 < 0.0 || x2 > 0.0, "witness should straddle the vertex");
                assert!(x2 - x1 < 0.1);
            }
            other => panic!("expected violation, got {other:?}"),
        }
    }

    #[test]
    fn log_is_increasing() {
        let got = check_monotone(&|x| Ok(x.ln()), &iv(0.1, 10.0), 64).unwrap();
        assert_eq!(got, Monotonicity::Monotone(Direction::Increasing));
    }

    #[test]
    fn refinement_catches_shallow_dip() {
        // Monotone at 16-sample resolution, but dips around x = 0.5.
        let f = |x: f64| Ok(x - 0.02 * (-((x - 0.5) / 0.004).powi(2)).exp());
        let got = check_monotone(&f, &iv(0.0, 1.0), 16).unwrap();
        assert!(matches!(got, Monotonicity::Violation { .. }));
    }

    #[test]
    fn eval_error_reports_offending_point() {
        let err = check_monotone(&|x| Ok(1.0 / x), &iv(-1.0, 1.0), 65).unwrap_err();
        match err {
            NumericsError::NonFinite { .. } | NumericsError::Eval { .. } => {}
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn solve_linear_root() {
        let r = solve_bracketed(&|x| Ok(x - 0.5), &iv(0.0, 1.0), 1e-12).unwrap();
        assert!((r - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn solve_cubic_root_matches_closed_form() {
        // x^3 = 0.125 has the closed-form root 0.5.
        let r = solve_bracketed(&|x| Ok(x * x * x - 0.125), &iv(-2.0, 2.0), 1e-12).unwrap();
        assert!((r - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn solve_transcendental_root_matches_frozen_oracle() {
        // Root of x + e^x = e, pinned by a 1e-14 bisection oracle.
        const ROOT: f64 = 0.701_502_063_566_844_6;
        let r = solve_bracketed(&|x| Ok(x + x.exp() - std::f64::consts::E), &iv(0.0, 2.0), 1e-12)
            .unwrap();
        assert!((r - ROOT).abs() <= 2e-12, "got {r}");
    }

    #[test]
    fn solve_requires_sign_change() {
        let err = solve_bracketed(&|x| Ok(x + 10.0), &iv(0.0, 1.0), 1e-12).unwrap_err();
        assert!(matches!(err, NumericsError::NoSignChange { .. }));
    }

    #[test]
    fn solve_agrees_with_pure_bisection_on_random_cubics() {
        // 100 random monotone cubics a*x^3 + b*x + c with a, b > 0.
        let mut rng = Lcg::new(0x5eed);
        let tol = 1e-12;
        for _ in 0..100 {
            let a = 0.1 + 3.0 * rng.next_f64();
            let b = 0.1 + 2.0 * rng.next_f64();
            let root = -1.0 + 2.0 * rng.next_f64();
            let g = move |x: f64| a * x * x * x + b * x - (a * root * root * root + b * root);
            let i = iv(-1.5, 1.5);
            let ours = solve_bracketed(&|x| Ok(g(x)), &i, tol).unwrap();
            let oracle = pure_bisect(&g, i.work_lo(), i.work_hi(), tol);
            assert!(
                (ours - oracle).abs() <= 2.0 * tol,
                "ours {ours} vs oracle {oracle}"
            );
        }
    }

    #[test]
    fn invert_exp() {
        let f = ScalarFn::validated(|x: f64| Ok(x.exp()), iv(0.0, 2.0), 64).unwrap();
        let x = invert_monotone(&f, std::f64::consts::E, 1e-12).unwrap();
        assert!((x - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn invert_cube_matches_closed_form() {
        let f = ScalarFn::validated(|x: f64| Ok(x * x * x), iv(-2.0, 2.0), 64).unwrap();
        let x = invert_monotone(&f, 0.125, 1e-12).unwrap();
        assert!((x - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn invert_reports_admissible_range() {
        let f = ScalarFn::validated(|x: f64| Ok(x.ln()), iv(0.5, 4.0), 64).unwrap();
        let err = invert_monotone(&f, 10.0, 1e-12).unwrap_err();
        match err {
            NumericsError::OutOfRange { y, min, max } => {
                assert_eq!(y, 10.0);
                assert!(min < max && max < 1.5, "range should cap near log 4");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn invert_decreasing_function() {
        let f = ScalarFn::validated(|x: f64| Ok(-2.0 * x), iv(0.0, 1.0), 64).unwrap();
        assert_eq!(f.direction(), Direction::Decreasing);
        let x = invert_monotone(&f, -1.0, 1e-12).unwrap();
        assert!((x - 0.5).abs() <= 1e-12);
    }

    proptest! {
        #[test]
        fn invert_round_trips(x in 0.05f64..1.95) {
            let f = ScalarFn::validated(|t: f64| Ok(t + t.exp()), iv(0.0, 2.0), 128).unwrap();
            let x = iv(0.0, 2.0).clamp_to_working(x);
            let y = f.eval(x).unwrap();
            let back = invert_monotone(&f, y, 1e-12).unwrap();
            prop_assert!((back - x).abs() <= 1e-12);
        }

        #[test]
        fn invert_preserves_order(y1 in 0.1f64..0.9, y2 in 0.1f64..0.9) {
            prop_assume!(y1 < y2);
            // Increasing f: inverses ordered the same way.
            let f = ScalarFn::validated(|t: f64| Ok(t * t * t), iv(0.0, 1.0), 128).unwrap();
            let x1 = invert_monotone(&f, y1, 1e-13).unwrap();
            let x2 = invert_monotone(&f, y2, 1e-13).unwrap();
            prop_assert!(x1 < x2);
            // Decreasing f: inverses reversed.
            let g = ScalarFn::validated(|t: f64| Ok(1.0 - t * t * t), iv(0.0, 1.0), 128).unwrap();
            let z1 = invert_monotone(&g, y1, 1e-13).unwrap();
            let z2 = invert_monotone(&g, y2, 1e-13).unwrap();
            prop_assert!(z1 > z2);
        }
    }
}
