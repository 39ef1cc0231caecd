//! Section maps, fixed-point orbits, domain estimation, and the constructive
//! decomposition underlying the local-to-global quasi-arithmeticity scan.
//!
//! For a mean `M` and a pinned second argument `v`, the sections are
//!
//! ```text
//! L_v(s) = M(M(s,v), v)        R_v(s) = M(s, M(s,v))
//! ```
//!
//! and the composition `psi_v = L_v o R_v^{-1}` is defined on
//! `J_v = R_v(I)`. Its orbits converge monotonically to the fixed point `v`;
//! `D(u)` collects the `v` whose section range reaches `u`. Membership in
//! `J_v` is decided operationally: does `R_v(s) = t` have a bracketed
//! solution on the inset working interval.

use thiserror::Error;

use crate::genexpr::GenFn;
use crate::means::{qa_value, Mean, MeanError};
use crate::numerics::{solve_in, Interval, NumericsError, DEFAULT_TOL};

/// Linear walk steps used when hunting a sign change of `v -> psi_v(x) - y`.
const BRACKET_WALK_STEPS: usize = 96;

/// Samples per side for the `R_v < L_v` precondition check.
const RL_SAMPLES: usize = 33;

/// Resolution used for the internal domain estimate in continuity probes.
const PROBE_DOMAIN_RESOLUTION: usize = 1001;

/// Absolute step-back threshold beyond which an orbit is flagged as
/// non-monotone (smaller wiggles count as numerical noise).
const MONOTONE_NOISE_FLOOR: f64 = 1e-13;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Mean(#[from] MeanError),

    #[error("t = {t} outside the section range J_v for v = {v} (attainable [{lo}, {hi}])")]
    OutsideSection { v: f64, t: f64, lo: f64, hi: f64 },

    #[error(
        "no decomposition bracket: psi_v({anchor}) does not attain {target} for v in [{lo}, {hi}]"
    )]
    NoBracket {
        anchor: f64,
        target: f64,
        lo: f64,
        hi: f64,
    },

    #[error("domain estimate for u = {u} came up empty")]
    EmptyDomain { u: f64 },

    #[error("point {x} outside the working interval [{lo}, {hi}]")]
    OutsideWorking { x: f64, lo: f64, hi: f64 },
}

fn require_working(iv: &Interval, x: f64) -> Result<(), DynamicsError> {
    if x < iv.work_lo() || x > iv.work_hi() {
        return Err(DynamicsError::OutsideWorking {
            x,
            lo: iv.work_lo(),
            hi: iv.work_hi(),
        });
    }
    Ok(())
}

fn section_r(m: &Mean, v: f64, s: f64) -> Result<f64, MeanError> {
    let inner = m.eval(s, v)?;
    m.eval(s, inner)
}

fn section_l(m: &Mean, v: f64, s: f64) -> Result<f64, MeanError> {
    let inner = m.eval(s, v)?;
    m.eval(inner, v)
}

/// Evaluates `psi_v(t) = L_v(R_v^{-1}(t))`.
///
/// `t = v` short-circuits to `v` (the fixed point), keeping the identity
/// exact. `t` outside `R_v`(working interval) is the membership failure for
/// the domain set and reports the attainable range.
pub fn section_psi(m: &Mean, v: f64, t: f64, tol: f64) -> Result<f64, DynamicsError> {
    require_working(m.interval(), v)?;
    if t == v {
        return Ok(v);
    }
    let wl = m.interval().work_lo();
    let wh = m.interval().work_hi();
    let r_lo = section_r(m, v, wl)?;
    let r_hi = section_r(m, v, wh)?;
    let (min, max) = if r_lo <= r_hi { (r_lo, r_hi) } else { (r_hi, r_lo) };
    if t < min || t > max {
        return Err(DynamicsError::OutsideSection {
            v,
            t,
            lo: min,
            hi: max,
        });
    }
    let g = |s: f64| -> Result<f64, NumericsError> {
        section_r(m, v, s)
            .map(|r| r - t)
            .map_err(|e| NumericsError::Eval {
                x: s,
                reason: e.to_string(),
            })
    };
    let s = solve_in(&g, wl, wh, tol).map_err(MeanError::from)?;
    Ok(section_l(m, v, s)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrbitMonotonicity {
    Increasing,
    Decreasing,
    /// Zero-length orbit (started at the fixed point).
    Trivial,
    Violation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    TolReached,
    MaxIter,
    DomainExit,
}

/// Iterate record for `psi_v` started at `xi`.
#[derive(Debug, Clone)]
pub struct Orbit {
    pub v: f64,
    pub start: f64,
    /// All iterates including the start value.
    pub iterates: Vec<f64>,
    pub converged: bool,
    pub monotone: OrbitMonotonicity,
    pub stop_reason: StopReason,
    /// Sampled check of the section precondition `R_v < L_v` below `v` and
    /// `R_v > L_v` above `v`.
    pub rl_holds: bool,
}

impl Orbit {
    pub fn iterations(&self) -> usize {
        self.iterates.len() - 1
    }

    pub fn last(&self) -> f64 {
        *self.iterates.last().unwrap()
    }
}

/// Verifies `R_v < L_v` on the sampled left side of `v` and the reverse on
/// the right side. Sample points keep a 1% margin away from `v`, where the
/// two sections collide within inversion noise.
fn check_rl(m: &Mean, v: f64) -> Result<bool, DynamicsError> {
    let wl = m.interval().work_lo();
    let wh = m.interval().work_hi();
    let side = |from: f64, to: f64, below: bool| -> Result<bool, DynamicsError> {
        if (to - from).abs() < 1e-9 {
            return Ok(true);
        }
        let margin = 0.01 * (to - from);
        let (a, b) = if below {
            (from, to - margin)
        } else {
            (from + margin, to)
        };
        for i in 0..RL_SAMPLES {
            let s = a + (b - a) * i as f64 / (RL_SAMPLES - 1) as f64;
            let r = section_r(m, v, s)?;
            let l = section_l(m, v, s)?;
            let holds = if below { r < l } else { r > l };
            if !holds {
                return Ok(false);
            }
        }
        Ok(true)
    };
    Ok(side(wl, v, true)? && side(v, wh, false)?)
}

/// Runs the orbit `xi, psi_v(xi), psi_v^2(xi), ...` until it lands within
/// `tol` of `v`, exits `J_v`, or exhausts `max_iter`.
pub fn run_orbit(
    m: &Mean,
    v: f64,
    xi: f64,
    max_iter: usize,
    tol: f64,
) -> Result<Orbit, DynamicsError> {
    require_working(m.interval(), v)?;
    require_working(m.interval(), xi)?;
    let rl_holds = check_rl(m, v)?;
    let mut orbit = Orbit {
        v,
        start: xi,
        iterates: vec![xi],
        converged: false,
        monotone: OrbitMonotonicity::Trivial,
        stop_reason: StopReason::TolReached,
        rl_holds,
    };
    if xi == v {
        orbit.converged = true;
        return Ok(orbit);
    }
    let toward = (v - xi).signum();
    orbit.monotone = if toward > 0.0 {
        OrbitMonotonicity::Increasing
    } else {
        OrbitMonotonicity::Decreasing
    };
    let inner_tol = (tol * 1e-2).clamp(1e-15, DEFAULT_TOL);
    let mut cur = xi;
    orbit.stop_reason = StopReason::MaxIter;
    for _ in 0..max_iter {
        let next = match section_psi(m, v, cur, inner_tol) {
            Ok(n) => n,
            Err(DynamicsError::OutsideSection { .. }) => {
                orbit.stop_reason = StopReason::DomainExit;
                return Ok(orbit);
            }
            Err(e) => return Err(e),
        };
        orbit.iterates.push(next);
        if (next - cur) * toward < -MONOTONE_NOISE_FLOOR {
            orbit.monotone = OrbitMonotonicity::Violation;
        }
        if (next - v).abs() <= tol {
            orbit.converged = true;
            orbit.stop_reason = StopReason::TolReached;
            return Ok(orbit);
        }
        if next == cur {
            return Ok(orbit); // stalled short of tol; max-iter semantics
        }
        cur = next;
    }
    Ok(orbit)
}

/// Scans `v` over a grid and returns the maximal contiguous run of passes of
/// the membership test `u in J_v`, as an interval containing `u`.
///
/// The result is an inner approximation: near the ends of the base interval
/// the inset makes membership conservative.
pub fn estimate_domain_d(
    m: &Mean,
    u: f64,
    resolution: usize,
) -> Result<Interval, DynamicsError> {
    assert!(resolution >= 3, "domain scan needs at least 3 points");
    require_working(m.interval(), u)?;
    let vs = m.interval().grid(resolution);
    let member = |v: f64| -> bool {
        let r_lo = match section_r(m, v, m.interval().work_lo()) {
            Ok(r) => r,
            Err(_) => return false,
        };
        let r_hi = match section_r(m, v, m.interval().work_hi()) {
            Ok(r) => r,
            Err(_) => return false,
        };
        let (min, max) = if r_lo <= r_hi { (r_lo, r_hi) } else { (r_hi, r_lo) };
        min <= u && u <= max
    };

    // Start at the grid point nearest u; v = u always passes in theory.
    let mut start = 0;
    let mut best = f64::INFINITY;
    for (i, &v) in vs.iter().enumerate() {
        let d = (v - u).abs();
        if d < best {
            best = d;
            start = i;
        }
    }
    if !member(vs[start]) {
        let found = vs.iter().position(|&v| member(v));
        match found {
            Some(i) => start = i,
            None => return Err(DynamicsError::EmptyDomain { u }),
        }
    }
    let mut lo_i = start;
    let mut hi_i = start;
    while lo_i > 0 && member(vs[lo_i - 1]) {
        lo_i -= 1;
    }
    while hi_i + 1 < vs.len() && member(vs[hi_i + 1]) {
        hi_i += 1;
    }
    let (mut lo, mut hi) = (vs[lo_i], vs[hi_i]);
    if lo_i == hi_i {
        // Isolated pass: widen by half a grid step so the interval stays
        // constructible (the true domain has nonempty interior).
        let step = vs[1] - vs[0];
        lo = (lo - 0.5 * step).max(m.interval().work_lo());
        hi = (hi + 0.5 * step).min(m.interval().work_hi());
    }
    Interval::with_inset(lo, hi, m.interval().inset())
        .map_err(|e| DynamicsError::Mean(MeanError::from(e)))
}

/// Samples `v -> psi_v(u)` at `n` points of the estimated domain and returns
/// the maximum adjacent jump. Range errors near the domain boundary are
/// trimmed rather than propagated.
pub fn probe_psi_continuity(m: &Mean, u: f64, n: usize) -> Result<f64, DynamicsError> {
    assert!(n >= 2, "continuity probe needs at least 2 samples");
    let domain = estimate_domain_d(m, u, PROBE_DOMAIN_RESOLUTION)?;
    let mut values = Vec::with_capacity(n);
    for &v in &domain.grid(n) {
        match section_psi(m, v, u, DEFAULT_TOL) {
            Ok(p) => values.push(p),
            Err(DynamicsError::OutsideSection { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    if values.len() < 2 {
        return Err(DynamicsError::EmptyDomain { u });
    }
    let mut max_jump: f64 = 0.0;
    for w in values.windows(2) {
        max_jump = max_jump.max((w[1] - w[0]).abs());
    }
    Ok(max_jump)
}

/// Solved pre-images for one argument pair: `R_{v0}(u0)` and `L_{v0}(u0)`
/// reproduce the pair, and `mean_check` measures how far `M(u0, v0)` sits
/// from `M(x, y)` (zero for balanced means).
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub x: f64,
    pub y: f64,
    pub u0: f64,
    pub v0: f64,
    /// `|R_{v0}(u0) - x|` (against `y` when `mirrored`).
    pub residual_r: f64,
    /// `|L_{v0}(u0) - y|` (against `x` when `mirrored`).
    pub residual_l: f64,
    pub mean_check: f64,
    /// Set when the pair was reached by the downward (role-swapped) search.
    pub mirrored: bool,
}

/// Finds `(u0, v0)` with `R_{v0}(u0) = x` and `L_{v0}(u0) = y` by bracketed
/// root finding on `v -> psi_v(x) - y`, walking `v` upward from `x`; when no
/// sign change appears, retries downward on `v -> psi_v(y) - x` with the
/// roles of the two sections swapped.
pub fn decompose(m: &Mean, x: f64, y: f64, tol: f64) -> Result<Decomposition, DynamicsError> {
    require_working(m.interval(), x)?;
    require_working(m.interval(), y)?;
    if x == y {
        return Ok(Decomposition {
            x,
            y,
            u0: x,
            v0: x,
            residual_r: 0.0,
            residual_l: 0.0,
            mean_check: 0.0,
            mirrored: false,
        });
    }
    let (a, b) = if x < y { (x, y) } else { (y, x) };
    let inner_tol = (tol * 1e-2).clamp(1e-15, DEFAULT_TOL);

    let attempt = |anchor: f64, target: f64, upward: bool| -> Result<
        Option<(f64, f64)>,
        DynamicsError,
    > {
        let edge = if upward {
            m.interval().work_hi()
        } else {
            m.interval().work_lo()
        };
        let want_sign = if upward { 1.0 } else { -1.0 };
        let h = |v: f64| -> Result<f64, DynamicsError> {
            Ok(section_psi(m, v, anchor, inner_tol)? - target)
        };
        let mut prev_v = anchor;
        let mut bracket = None;
        for i in 1..=BRACKET_WALK_STEPS {
            let v = anchor + (edge - anchor) * i as f64 / BRACKET_WALK_STEPS as f64;
            match h(v) {
                Ok(hv) => {
                    if hv * want_sign >= 0.0 {
                        bracket = Some((prev_v, v));
                        break;
                    }
                    prev_v = v;
                }
                Err(DynamicsError::OutsideSection { .. }) => break,
                Err(e) => return Err(e),
            }
        }
        let Some((lo_v, hi_v)) = bracket else {
            return Ok(None);
        };
        let g = |v: f64| -> Result<f64, NumericsError> {
            h(v).map_err(|e| NumericsError::Eval {
                x: v,
                reason: e.to_string(),
            })
        };
        let v0 = solve_in(&g, lo_v, hi_v, tol).map_err(MeanError::from)?;
        // Pull u0 back through R_{v0}.
        let r = |s: f64| -> Result<f64, NumericsError> {
            section_r(m, v0, s)
                .map(|r| r - anchor)
                .map_err(|e| NumericsError::Eval {
                    x: s,
                    reason: e.to_string(),
                })
        };
        let u0 = solve_in(
            &r,
            m.interval().work_lo(),
            m.interval().work_hi(),
            inner_tol,
        )
        .map_err(MeanError::from)?;
        Ok(Some((u0, v0)))
    };

    // Upward: psi_{v}(a) grows from a toward b as v rises above a.
    let (u0, v0, mirrored, anchor, target) = match attempt(a, b, true)? {
        Some((u0, v0)) => (u0, v0, false, a, b),
        None => match attempt(b, a, false)? {
            Some((u0, v0)) => (u0, v0, true, b, a),
            None => {
                return Err(DynamicsError::NoBracket {
                    anchor: a,
                    target: b,
                    lo: m.interval().work_lo(),
                    hi: m.interval().work_hi(),
                })
            }
        },
    };

    let residual_r = (section_r(m, v0, u0)? - anchor).abs();
    let residual_l = (section_l(m, v0, u0)? - target).abs();
    let mean_check = (m.eval(u0, v0)? - m.eval(x, y)?).abs();
    Ok(Decomposition {
        x,
        y,
        u0,
        v0,
        residual_r,
        residual_l,
        mean_check,
        mirrored,
    })
}

/// Grows a symmetric rectangle around `(p, p)` in geometric steps, measuring
/// `max |M - A_phi|` on each rectangle, and returns the largest radius whose
/// defect stays within `tol` (0.0 when even the smallest rectangle fails).
///
/// The scan stops once the rectangle covers the working interval, so a
/// radius at least `max(p - work_lo, work_hi - p)` means global agreement.
pub fn local_qa_scan(
    m: &Mean,
    phi: &GenFn,
    p: f64,
    tol: f64,
    max_steps: usize,
) -> Result<f64, DynamicsError> {
    require_working(m.interval(), p)?;
    const RECT_GRID: usize = 9;
    let wl = m.interval().work_lo();
    let wh = m.interval().work_hi();
    let mut radius = 1e-3 * m.interval().width();
    let mut passed = 0.0;
    for _ in 0..max_steps {
        let lo = (p - radius).max(wl);
        let hi = (p + radius).min(wh);
        let step = (hi - lo) / (RECT_GRID - 1) as f64;
        let mut max_defect: f64 = 0.0;
        for i in 0..RECT_GRID {
            for j in 0..RECT_GRID {
                let x = lo + i as f64 * step;
                let y = lo + j as f64 * step;
                let d = (m.eval(x, y)? - qa_value(phi, m.tol(), x, y)?).abs();
                max_defect = max_defect.max(d);
            }
        }
        if max_defect > tol {
            break;
        }
        passed = radius;
        if p - radius <= wl && p + radius >= wh {
            break; // rectangle already covers the working interval
        }
        radius *= 1.5;
    }
    Ok(passed)
}
