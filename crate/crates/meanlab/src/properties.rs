//! Pointwise defect functionals for the functional equations a mean can
//! satisfy, plus grid-based checkers producing [`DefectReport`]s.
//!
//! A defect is the absolute deviation between the two sides of an equation
//! at a point; a mean passes a property when the grid maximum stays below
//! tolerance. Defects are measured in the value space of the interval, not
//! through any generator.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::genexpr::GenFn;
use crate::means::{make_mean, qa_value, Mean, MeanError, MeanSpec};
use crate::numerics::Interval;

/// Default verdict threshold: 10x the tolerance accumulated through two
/// nested mean evaluations at the default inversion tolerance.
pub const DEFAULT_VERDICT_TOL: f64 = 1e-7;

/// Default per-axis cap for bisymmetry grids (9^4 = 6561 quadruples).
pub const DEFAULT_BISYM_CAP: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Property {
    Balancing,
    Symmetry,
    Bisymmetry,
    Iqa,
    MeanAxiom,
    Strictness,
}

impl Property {
    pub fn name(self) -> &'static str {
        match self {
            Property::Balancing => "balancing",
            Property::Symmetry => "symmetry",
            Property::Bisymmetry => "bisymmetry",
            Property::Iqa => "iqa",
            Property::MeanAxiom => "mean-axiom",
            Property::Strictness => "strictness",
        }
    }

    /// Number of coordinates a grid point has for this property.
    pub fn arity(self) -> usize {
        match self {
            Property::Bisymmetry => 4,
            _ => 2,
        }
    }
}

impl FromStr for Property {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "balancing" => Ok(Property::Balancing),
            "symmetry" => Ok(Property::Symmetry),
            "bisymmetry" => Ok(Property::Bisymmetry),
            "iqa" => Ok(Property::Iqa),
            "mean-axiom" => Ok(Property::MeanAxiom),
            "strictness" => Ok(Property::Strictness),
            other => Err(format!("unknown property '{other}'")),
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Result of a grid scan of one property.
#[derive(Debug, Clone)]
pub struct DefectReport {
    pub property: Property,
    pub grid_n: usize,
    pub interval: Interval,
    pub max_defect: f64,
    /// Grid point attaining the maximum; 2 or 4 coordinates. Ties resolve
    /// to the first point in row-major order.
    pub argmax: Vec<f64>,
    pub tol: f64,
    pub pass: bool,
}

impl DefectReport {
    pub fn verdict(&self) -> &'static str {
        if self.pass {
            "pass"
        } else {
            "fail"
        }
    }

    /// Flat key=value block, one entry per line.
    pub fn key_value_block(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("property={}\n", self.property));
        out.push_str(&format!("grid_n={}\n", self.grid_n));
        out.push_str(&format!("lo={}\n", fmt_full(self.interval.lo())));
        out.push_str(&format!("hi={}\n", fmt_full(self.interval.hi())));
        out.push_str(&format!("max_defect={}\n", fmt_full(self.max_defect)));
        let names = ["x", "y", "u", "v"];
        for (name, value) in names.iter().zip(&self.argmax) {
            out.push_str(&format!("argmax_{name}={}\n", fmt_full(*value)));
        }
        out.push_str(&format!("tol={}\n", fmt_full(self.tol)));
        out.push_str(&format!("verdict={}\n", self.verdict()));
        out
    }

    pub fn csv_header() -> &'static str {
        "property,grid_n,lo,hi,max_defect,argmax_x,argmax_y,argmax_u,argmax_v,tol,verdict"
    }

    pub fn csv_row(&self) -> String {
        let coord = |i: usize| self.argmax.get(i).map(|v| fmt_full(*v)).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.property,
            self.grid_n,
            fmt_full(self.interval.lo()),
            fmt_full(self.interval.hi()),
            fmt_full(self.max_defect),
            coord(0),
            coord(1),
            coord(2),
            coord(3),
            fmt_full(self.tol),
            self.verdict()
        )
    }
}

/// 17 significant digits: enough to reproduce any f64 exactly.
pub(crate) fn fmt_full(x: f64) -> String {
    format!("{x:.16e}")
}

/// Error from a grid scan, carrying the grid point that failed.
#[derive(Debug, Error)]
#[error("defect evaluation failed at grid point {point:?}: {source}")]
pub struct GridEvalError {
    pub point: Vec<f64>,
    #[source]
    pub source: MeanError,
}

/// `|M(M(x,u), M(u,y)) - u|` with `u = M(x,y)`.
pub fn balancing_defect(m: &Mean, x: f64, y: f64) -> Result<f64, MeanError> {
    let u = m.eval(x, y)?;
    let left = m.eval(x, u)?;
    let right = m.eval(u, y)?;
    Ok((m.eval(left, right)? - u).abs())
}

/// `|M(x,y) - M(y,x)|`.
pub fn symmetry_defect(m: &Mean, x: f64, y: f64) -> Result<f64, MeanError> {
    Ok((m.eval(x, y)? - m.eval(y, x)?).abs())
}

/// `|M(M(x,y), M(u,v)) - M(M(x,u), M(y,v))|`.
pub fn bisymmetry_defect(m: &Mean, x: f64, y: f64, u: f64, v: f64) -> Result<f64, MeanError> {
    let lhs = m.eval(m.eval(x, y)?, m.eval(u, v)?)?;
    let rhs = m.eval(m.eval(x, u)?, m.eval(y, v)?)?;
    Ok((lhs - rhs).abs())
}

/// `|A_phi(M(x,u), M(u,y)) - u|` with `u = M(x,y)`: the iterative
/// quasi-arithmeticity defect with respect to the generator `phi`.
pub fn iqa_defect(m: &Mean, phi: &GenFn, x: f64, y: f64) -> Result<f64, MeanError> {
    let u = m.eval(x, y)?;
    let left = m.eval(x, u)?;
    let right = m.eval(u, y)?;
    Ok((qa_value(phi, m.tol(), left, right)? - u).abs())
}

/// Violation of `min(x,y) <= M(x,y) <= max(x,y)`, as a magnitude.
pub fn mean_axiom_defect(m: &Mean, x: f64, y: f64) -> Result<f64, MeanError> {
    let v = m.eval(x, y)?;
    let (a, b) = (x.min(y), x.max(y));
    Ok((a - v).max(v - b).max(0.0))
}

/// Strictness indicator: 1.0 when `x != y` and the value touches an
/// endpoint of the hull, 0.0 otherwise.
pub fn strictness_defect(m: &Mean, x: f64, y: f64) -> Result<f64, MeanError> {
    if x == y {
        return Ok(0.0);
    }
    let v = m.eval(x, y)?;
    let (a, b) = (x.min(y), x.max(y));
    Ok(if v <= a || v >= b { 1.0 } else { 0.0 })
}

#[derive(Debug, Clone, Copy)]
pub struct CheckOptions {
    /// Per-axis cap applied to bisymmetry grids.
    pub bisym_cap: usize,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            bisym_cap: DEFAULT_BISYM_CAP,
        }
    }
}

/// Evaluates the pointwise defect of `property` on a lattice over the
/// working interval and reduces to (max, argmax, verdict).
///
/// The reduction is deterministic regardless of evaluation order: points
/// compare by `(defect, row-major index)` and ties keep the earliest index.
pub fn check_property(
    m: &Mean,
    property: Property,
    grid_n: usize,
    tol: f64,
    phi: Option<&GenFn>,
    opts: &CheckOptions,
) -> Result<DefectReport, GridEvalError> {
    assert!(grid_n >= 2, "grid needs at least 2 points per axis");
    let phi = match (property, phi) {
        (Property::Iqa, Some(p)) => Some(p),
        (Property::Iqa, None) => {
            return Err(GridEvalError {
                point: vec![],
                source: MeanError::Invalid("iqa requires a generator phi".into()),
            })
        }
        (_, p) => p,
    };

    let n = if property == Property::Bisymmetry {
        grid_n.min(opts.bisym_cap)
    } else {
        grid_n
    };
    let pts = m.interval().grid(n);
    let arity = property.arity();
    let total = pts.len().pow(arity as u32);

    let point_of = |idx: usize| -> Vec<f64> {
        let mut rem = idx;
        let mut coords = vec![0.0; arity];
        for slot in (0..arity).rev() {
            coords[slot] = pts[rem % n];
            rem /= n;
        }
        coords
    };

    let eval_at = |coords: &[f64]| -> Result<f64, MeanError> {
        match property {
            Property::Balancing => balancing_defect(m, coords[0], coords[1]),
            Property::Symmetry => symmetry_defect(m, coords[0], coords[1]),
            Property::Bisymmetry => {
                bisymmetry_defect(m, coords[0], coords[1], coords[2], coords[3])
            }
            Property::Iqa => iqa_defect(m, phi.unwrap(), coords[0], coords[1]),
            Property::MeanAxiom => mean_axiom_defect(m, coords[0], coords[1]),
            Property::Strictness => strictness_defect(m, coords[0], coords[1]),
        }
    };

    let best = (0..total)
        .into_par_iter()
        .map(|idx| {
            let coords = point_of(idx);
            match eval_at(&coords) {
                Ok(d) => Ok((d, idx)),
                Err(source) => Err(GridEvalError {
                    point: coords,
                    source,
                }),
            }
        })
        .try_reduce(
            || (f64::NEG_INFINITY, usize::MAX),
            |a, b| {
                Ok(if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                    b
                } else {
                    a
                })
            },
        )?;

    let (max_defect, arg_idx) = best;
    Ok(DefectReport {
        property,
        grid_n: n,
        interval: *m.interval(),
        max_defect,
        argmax: point_of(arg_idx),
        tol,
        pass: max_defect <= tol,
    })
}

/// Outcome of the symmetry criterion for a generalized generator pair:
/// constancy of `f - g` measured against the symmetry defect of the mean
/// the pair generates. The two indicators must agree for the criterion to
/// be consistent.
#[derive(Debug, Clone)]
pub struct MatkowskiVerdict {
    /// `max - min` of `f - g` over a 1-D grid (equals the max over pairs of
    /// `|(f-g)(x) - (f-g)(y)|`).
    pub constancy_defect: f64,
    pub symmetry_max_defect: f64,
    pub symmetry_argmax: Vec<f64>,
    pub tol: f64,
    pub consistent: bool,
}

pub fn matkowski_criterion(
    f: &GenFn,
    g: &GenFn,
    iv: &Interval,
    grid_n: usize,
    tol: f64,
) -> Result<MatkowskiVerdict, MeanError> {
    let spec = MeanSpec::Matkowski {
        f: f.ast().clone(),
        g: g.ast().clone(),
    };
    let mean = make_mean(&spec, *iv)?;

    let mut min_d = f64::INFINITY;
    let mut max_d = f64::NEG_INFINITY;
    for &x in &iv.grid(grid_n) {
        let d = f.eval(x)? - g.eval(x)?;
        min_d = min_d.min(d);
        max_d = max_d.max(d);
    }
    let constancy_defect = max_d - min_d;

    let report = check_property(
        &mean,
        Property::Symmetry,
        grid_n,
        tol,
        None,
        &CheckOptions::default(),
    )
    .map_err(|e| e.source)?;

    let constant = constancy_defect <= tol;
    let symmetric = report.max_defect <= tol;
    Ok(MatkowskiVerdict {
        constancy_defect,
        symmetry_max_defect: report.max_defect,
        symmetry_argmax: report.argmax,
        tol,
        consistent: constant == symmetric,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genexpr::{parse_expr, validate_generator};
    use crate::means::parse_mean_spec;

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    fn mean(spec: &str, lo: f64, hi: f64) -> Mean {
        make_mean(&parse_mean_spec(spec).unwrap(), iv(lo, hi)).unwrap()
    }

    fn gen(expr: &str, lo: f64, hi: f64) -> GenFn {
        validate_generator(&parse_expr(expr).unwrap(), &iv(lo, hi)).unwrap()
    }

    #[test]
    fn arithmetic_balancing_defect_is_zero() {
        let m = mean("qa(phi=\"x\")", -1.0, 2.0);
        assert_eq!(balancing_defect(&m, 0.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn examplek_balancing_defect_matches_exact_fractions() {
        // u = 3/4, K(0,u) = 9/16, K(u,1) = 15/16, K(9/16,15/16) = 27/32;
        // defect = 27/32 - 24/32 = 3/32 = 0.09375, exact in f64.
        let m = mean("examplek(phi=\"x\", t=0.25)", 0.0, 1.0);
        assert_eq!(balancing_defect(&m, 0.0, 1.0).unwrap(), 0.09375);
    }

    #[test]
    fn matkowski_balancing_defect_matches_frozen_oracle() {
        // Pinned by a 40-digit bisection oracle at (0.5, 1.5).
        const EXPECTED: f64 = 0.094_229_117_537_2;
        let m = mean("matkowski(f=\"x\", g=\"exp(x)\")", 0.0, 2.0);
        let d = balancing_defect(&m, 0.5, 1.5).unwrap();
        assert!((d - EXPECTED).abs() < 1e-10, "got {d}");
        assert!(d > 1e-4);
    }

    #[test]
    fn symmetry_defect_vanishes_on_diagonal_and_for_qa() {
        let m = mean("matkowski(f=\"x\", g=\"exp(x)\")", 0.0, 2.0);
        assert_eq!(symmetry_defect(&m, 0.7, 0.7).unwrap(), 0.0);
        let q = mean("qa(phi=\"log(x)\")", 0.5, 4.0);
        assert!(symmetry_defect(&q, 1.0, 4.0).unwrap() <= 1e-11);
    }

    #[test]
    fn matkowski_symmetry_defect_matches_frozen_oracle() {
        const EXPECTED: f64 = 0.464_958_558_915;
        let m = mean("matkowski(f=\"x\", g=\"exp(x)\")", 0.0, 2.0);
        let d = symmetry_defect(&m, 0.5, 1.5).unwrap();
        assert!((d - EXPECTED).abs() < 1e-10, "got {d}");
    }

    #[test]
    fn arithmetic_is_bisymmetric() {
        let m = mean("qa(phi=\"x\")", 0.0, 1.0);
        assert_eq!(bisymmetry_defect(&m, 0.0, 1.0, 0.6, 0.2).unwrap(), 0.0);
    }

    #[test]
    fn examplek_bisymmetry_defect_matches_exact_fractions() {
        // Branch algebra: |K(K(0,1), K(0.6,0.2)) - K(K(0,0.6), K(1,0.2))|
        //               = |11/16 - 57/80| = 1/40 = 0.025.
        let m = mean("examplek(phi=\"x\", t=0.25)", 0.0, 1.0);
        let d = bisymmetry_defect(&m, 0.0, 1.0, 0.6, 0.2).unwrap();
        assert!((d - 0.025).abs() < 1e-12, "got {d}");
    }

    #[test]
    fn qa_log_is_bisymmetric_numerically() {
        let m = mean("qa(phi=\"log(x)\")", 0.5, 4.0);
        let d = bisymmetry_defect(&m, 1.0, 3.5, 2.0, 0.7).unwrap();
        assert!(d < 1e-10, "got {d}");
    }

    #[test]
    fn matkowski_iqa_defect_with_sum_generator_vanishes() {
        let m = mean("matkowski(f=\"x\", g=\"exp(x)\")", 0.0, 2.0);
        let phi = gen("x+exp(x)", 0.0, 2.0);
        let d = iqa_defect(&m, &phi, 0.3, 1.2).unwrap();
        assert!(d < 1e-9, "got {d}");
    }

    #[test]
    fn examplek_iqa_defect_with_own_generator_vanishes() {
        // A(K(x,u), K(u,y)) = u exactly for the identity generator:
        // A(0.5625, 0.9375) = 0.75.
        let m = mean("examplek(phi=\"x\", t=0.25)", 0.0, 1.0);
        let phi = gen("x", 0.0, 1.0);
        assert_eq!(iqa_defect(&m, &phi, 0.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn defects_vanish_on_the_diagonal() {
        let m = mean("matkowski(f=\"x\", g=\"exp(x)\")", 0.0, 2.0);
        let phi = gen("x+exp(x)", 0.0, 2.0);
        for &p in &[0.1, 0.9, 1.7] {
            assert_eq!(balancing_defect(&m, p, p).unwrap(), 0.0);
            assert_eq!(symmetry_defect(&m, p, p).unwrap(), 0.0);
            assert_eq!(iqa_defect(&m, &phi, p, p).unwrap(), 0.0);
        }
    }

    #[test]
    fn check_arithmetic_balancing_passes_with_zero_max() {
        let m = mean("qa(phi=\"x\")", 0.0, 1.0);
        let r = check_property(
            &m,
            Property::Balancing,
            33,
            1e-10,
            None,
            &CheckOptions::default(),
        )
        .unwrap();
        assert!(r.pass);
        assert!(r.max_defect <= 1e-15, "max {}", r.max_defect);
    }

    #[test]
    fn check_examplek_balancing_fails_near_corner() {
        let m = mean("examplek(phi=\"x\", t=0.25)", 0.0, 1.0);
        let r = check_property(
            &m,
            Property::Balancing,
            33,
            1e-6,
            None,
            &CheckOptions::default(),
        )
        .unwrap();
        assert!(!r.pass);
        // The dense-sweep maximum 0.09375 sits at the working corner; a
        // 33-point grid contains that corner.
        assert!(r.max_defect >= 0.09375 * (1.0 - 3e-6), "max {}", r.max_defect);
        assert!(r.argmax[0] < 0.01 && r.argmax[1] > 0.99, "argmax {:?}", r.argmax);
    }

    #[test]
    fn check_constant_shift_matkowski_is_symmetric() {
        let m = mean("matkowski(f=\"x\", g=\"x+5\")", 0.0, 2.0);
        let r = check_property(
            &m,
            Property::Symmetry,
            33,
            1e-9,
            None,
            &CheckOptions::default(),
        )
        .unwrap();
        assert!(r.pass, "max {}", r.max_defect);
    }

    #[test]
    fn bisymmetry_grid_is_capped() {
        let m = mean("qa(phi=\"x\")", 0.0, 1.0);
        let r = check_property(
            &m,
            Property::Bisymmetry,
            33,
            1e-9,
            None,
            &CheckOptions::default(),
        )
        .unwrap();
        assert_eq!(r.grid_n, DEFAULT_BISYM_CAP);
        assert!(r.pass);
        assert_eq!(r.argmax.len(), 4);
    }

    #[test]
    fn argmax_ties_resolve_to_first_row_major_point() {
        // Symmetry defect of a symmetric mean is 0 everywhere; the reported
        // argmax must be the first grid point.
        let m = mean("qa(phi=\"x\")", 0.0, 1.0);
        let r = check_property(
            &m,
            Property::Symmetry,
            17,
            1e-9,
            None,
            &CheckOptions::default(),
        )
        .unwrap();
        let w = m.interval().work_lo();
        assert_eq!(r.argmax, vec![w, w]);
    }

    #[test]
    fn iqa_requires_generator() {
        let m = mean("qa(phi=\"x\")", 0.0, 1.0);
        let err = check_property(&m, Property::Iqa, 9, 1e-9, None, &CheckOptions::default());
        assert!(err.is_err());
    }

    #[test]
    fn projections_balance_exactly_on_grids() {
        for spec in ["proj1", "proj2", "min", "max"] {
            let m = mean(spec, 0.0, 1.0);
            let r = check_property(
                &m,
                Property::Balancing,
                17,
                0.0,
                None,
                &CheckOptions::default(),
            )
            .unwrap();
            assert_eq!(r.max_defect, 0.0, "{spec}");
            assert!(r.pass, "{spec}");
        }
    }

    #[test]
    fn matkowski_criterion_consistent_for_constant_difference() {
        let f = gen("x", 0.0, 2.0);
        let g = gen("x+5", 0.0, 2.0);
        let v = matkowski_criterion(&f, &g, &iv(0.0, 2.0), 33, 1e-7).unwrap();
        assert!(v.constancy_defect <= 1e-9);
        assert!(v.symmetry_max_defect <= 1e-9);
        assert!(v.consistent);
    }

    #[test]
    fn matkowski_criterion_consistent_for_nonconstant_difference() {
        let f = gen("x", 0.0, 2.0);
        let g = gen("exp(x)", 0.0, 2.0);
        let v = matkowski_criterion(&f, &g, &iv(0.0, 2.0), 33, 1e-7).unwrap();
        assert!(v.constancy_defect > 1e-3);
        assert!(v.symmetry_max_defect > 1e-3);
        assert!(v.consistent);
    }

    #[test]
    fn matkowski_criterion_trivial_for_equal_generators() {
        let f = gen("2*x", 0.0, 2.0);
        let v = matkowski_criterion(&f, &f, &iv(0.0, 2.0), 17, 1e-9).unwrap();
        assert_eq!(v.constancy_defect, 0.0);
        assert!(v.symmetry_max_defect <= 1e-12);
        assert!(v.consistent);
    }

    #[test]
    fn report_serializes_to_key_value_and_csv() {
        let m = mean("qa(phi=\"x\")", 0.0, 1.0);
        let r = check_property(
            &m,
            Property::Balancing,
            5,
            1e-10,
            None,
            &CheckOptions::default(),
        )
        .unwrap();
        let block = r.key_value_block();
        assert!(block.contains("property=balancing"));
        assert!(block.contains("verdict=pass"));
        let row = r.csv_row();
        assert_eq!(row.split(',').count(), DefectReport::csv_header().split(',').count());
    }
}
