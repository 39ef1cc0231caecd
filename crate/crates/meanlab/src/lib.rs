//! meanlab: a numerical laboratory for two-variable means on open real
//! intervals.
//!
//! The crate builds mean families from user-supplied generator expressions
//! (quasi-arithmetic, weighted, Matkowski, Bajraktarevic, Cauchy, and
//! combinators over them), measures functional-equation defects (balancing,
//! symmetry, bisymmetry, iterative quasi-arithmeticity) on grids, and runs
//! the section/orbit dynamics that connect the balancing property to
//! quasi-arithmeticity.
//!
//! Modules, bottom up:
//!
//! - [`numerics`]: intervals, monotonicity certification, bracketed root
//!   finding, monotone inversion.
//! - [`genexpr`]: the generator expression language (parser, evaluator,
//!   symbolic differentiator) and validated generators.
//! - [`means`]: mean constructors, the spec mini-language, and the compiled
//!   evaluator.
//! - [`properties`]: pointwise defects and grid checkers.
//! - [`dynamics`]: sections, orbits, domain estimation, decomposition, and
//!   the local quasi-arithmeticity scan.
//! - [`cli`]: the command-line front end, including the verification suite.

pub mod cli;
pub mod dynamics;
pub mod genexpr;
pub mod means;
pub mod numerics;
pub mod properties;
pub mod rng;

pub use genexpr::{parse_expr, validate_generator, ExprAst, GenFn};
pub use means::{eval_mean, make_mean, parse_mean_spec, Mean, MeanSpec};
pub use numerics::{Direction, Interval};
pub use properties::{check_property, DefectReport, Property};
