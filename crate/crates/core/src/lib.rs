//! Numerical laboratory for quasiequilibrium problems on compact real intervals.
//!
//! Find `x ∈ K(x)` with `f(x, y) <= 0` for all `y ∈ K(x)`, where `K` is a
//! piecewise set-valued map on a closed interval `C` and `f` a bifunction
//! expression. The crate computes fixed-point sets and ε-enlargements exactly,
//! evaluates marginal functions, constructs continuous selections through a
//! distance-based partition of unity, and certifies exact, ε- and
//! approximate solutions.

pub mod expr;
pub mod intervals;
pub mod marginal;
pub mod model;
pub mod selection;
pub mod setmap;
pub mod solver;

pub use expr::{Bifunction, EvalError, Expr, ExprError, ScalarFn};
pub use intervals::{Endpoint, Interval, IntervalError, IntervalSet, Kind, Side};
pub use marginal::{MarginalError, MarginalValue};
pub use model::{CheckResult, Scenario, ScenarioError, Tolerances, Witness};
pub use selection::{ContinuousSelection, SelectionError, SelectionMode, SelectionProblem};
pub use setmap::{AffineBound, ImagePart, MapError, Piece, PiecewiseMap};
pub use solver::{Certificate, CertificateKind, Problem, SolverError};

/// Default number of grid intervals for sampled checks and scans.
pub const DEFAULT_GRID: usize = 512;

/// `n + 1` uniformly spaced points covering `[lo, hi]`, endpoints exact.
pub(crate) fn uniform_grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let n = n.max(1);
    (0..=n).map(move |i| if i == n { hi } else { lo + (hi - lo) * (i as f64) / (n as f64) })
}
