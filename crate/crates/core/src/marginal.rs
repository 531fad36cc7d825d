//! Marginal functions `m(x) = sup_{y∈F(x)} f(x,y)` and friends.
//!
//! Extrema of `f(x, ·)` are taken over the closure of the feasible set,
//! which gives the same value because every expressible `f` is continuous
//! and each interval is dense in its closure. Attainment is then decided by
//! exact membership of the extremal point. When `f` is affine in `y` the
//! extremum sits at an interval endpoint and is computed exactly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{EvalError, Expr, ScalarFn};
use crate::intervals::{Interval, IntervalSet};
use crate::model::{CheckResult, Scenario, Witness};
use crate::setmap::{MapError, PiecewiseMap};
use crate::uniform_grid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarginalError {
    #[error("feasible set is empty at x = {0}")]
    EmptyFeasibleSet(f64),
    #[error("fix K_eps is empty for eps = {0}")]
    EmptyFixedSet(f64),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalValue {
    pub value: f64,
    pub attained: bool,
    pub argpoint: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Goal {
    Max,
    Min,
}

impl Goal {
    fn better(self, a: f64, b: f64) -> bool {
        match self {
            Goal::Max => a > b,
            Goal::Min => a < b,
        }
    }
}

/// `f(x,y)` with its affine-in-`y` split precomputed.
#[derive(Debug, Clone)]
pub struct Marginal {
    f: Expr,
    split: Option<(Expr, Expr)>,
    grid_n: usize,
}

impl Marginal {
    pub fn new(f: &Expr, grid_n: usize) -> Marginal {
        Marginal { f: f.clone(), split: f.affine_in("y"), grid_n: grid_n.max(1) }
    }

    pub fn is_affine_in_y(&self) -> bool {
        self.split.is_some()
    }

    pub fn sup_over(&self, x: f64, set: &IntervalSet) -> Result<MarginalValue, MarginalError> {
        self.extremum(x, set, Goal::Max)
    }

    pub fn inf_over(&self, x: f64, set: &IntervalSet) -> Result<MarginalValue, MarginalError> {
        self.extremum(x, set, Goal::Min)
    }

    fn extremum(&self, x: f64, set: &IntervalSet, goal: Goal) -> Result<MarginalValue, MarginalError> {
        if set.is_empty() {
            return Err(MarginalError::EmptyFeasibleSet(x));
        }
        match &self.split {
            Some((_, slope)) => self.affine_extremum(x, set, goal, slope.eval(&[x, 0.0])?),
            None => self.sampled_extremum(x, set, goal),
        }
    }

    fn affine_extremum(
        &self,
        x: f64,
        set: &IntervalSet,
        goal: Goal,
        slope: f64,
    ) -> Result<MarginalValue, MarginalError> {
        if slope == 0.0 {
            let y = set.representative().expect("nonempty");
            return Ok(MarginalValue { value: self.f.eval(&[x, y])?, attained: true, argpoint: Some(y) });
        }
        let parts = set.parts();
        let upward = (slope > 0.0) == (goal == Goal::Max);
        let e = if upward { parts[parts.len() - 1].hi() } else { parts[0].lo() };
        Ok(MarginalValue { value: self.f.eval(&[x, e.value])?, attained: e.kind.is_closed(), argpoint: Some(e.value) })
    }

    fn sampled_extremum(&self, x: f64, set: &IntervalSet, goal: Goal) -> Result<MarginalValue, MarginalError> {
        // (value, y, member)
        let mut best: Option<(f64, f64, bool)> = None;
        let consider = |y: f64, v: f64, best: &mut Option<(f64, f64, bool)>| {
            let member = set.contains(y);
            match best {
                Some((bv, _, bm)) if !(goal.better(v, *bv) || (v == *bv && member && !*bm)) => {}
                _ => *best = Some((v, y, member)),
            }
        };
        for part in set.parts() {
            let (lo, hi) = (part.lo().value, part.hi().value);
            let mut cell_lo = lo;
            let mut cell_hi = hi;
            let mut n = self.grid_n;
            for _round in 0..3 {
                let mut local: Option<(f64, usize)> = None;
                let pts: Vec<f64> = uniform_grid(cell_lo, cell_hi, n).collect();
                for (i, &y) in pts.iter().enumerate() {
                    let v = self.f.eval(&[x, y])?;
                    consider(y, v, &mut best);
                    if local.is_none_or(|(lv, _)| goal.better(v, lv)) {
                        local = Some((v, i));
                    }
                }
                if lo == hi {
                    break;
                }
                let (_, i) = local.expect("grid is nonempty");
                cell_lo = pts[i.saturating_sub(1)];
                cell_hi = pts[(i + 1).min(pts.len() - 1)];
                n = 20;
            }
        }
        let (value, y, member) = best.expect("nonempty set");
        Ok(MarginalValue { value, attained: member, argpoint: Some(y) })
    }
}

/// `m(x) = sup_{y∈F(x)} f(x,y)`.
pub fn sup_marginal(f: &Expr, map: &PiecewiseMap, x: f64, grid_n: usize) -> Result<MarginalValue, MarginalError> {
    Marginal::new(f, grid_n).sup_over(x, &map.eval_at(x)?)
}

/// `inf_{y∈F_ε(x)} f(x,y)` with `F_ε(x) = (F(x) + εB) ∩ C`.
pub fn inf_marginal(
    f: &Expr,
    map: &PiecewiseMap,
    eps: f64,
    x: f64,
    grid_n: usize,
) -> Result<MarginalValue, MarginalError> {
    Marginal::new(f, grid_n).inf_over(x, &map.eval_enlarged(x, eps)?)
}

/// Candidate outer points on a closed set: grid points inside it, part
/// endpoints, and the map's breakpoints inside it.
pub(crate) fn outer_candidates(set: &IntervalSet, ground: &Interval, breakpoints: &[f64], grid_n: usize) -> Vec<f64> {
    let (lo, hi) = (ground.lo().value, ground.hi().value);
    let mut xs: Vec<f64> = uniform_grid(lo, hi, grid_n)
        .chain(set.parts().iter().flat_map(|p| [p.lo().value, p.hi().value]))
        .chain(breakpoints.iter().copied())
        .filter(|&x| set.contains(x))
        .collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

/// `g = sup_{x∈cl fix K_ε} inf_{y∈K_ε(x)} (-f(x,y)) = -inf_{x∈cl fix K_ε} m_ε(x)`.
///
/// The argpoint is the outer minimizer of `m_ε`; `attained` records that it
/// lies in the closed outer set.
pub fn g_value(s: &Scenario, eps: f64, grid_n: usize) -> Result<MarginalValue, MarginalError> {
    let enlarged = s.map().enlarge(eps)?;
    let fix = enlarged.fixed_point_set();
    if fix.is_empty() {
        return Err(MarginalError::EmptyFixedSet(eps));
    }
    let outer = fix.closure();
    let m = Marginal::new(s.f(), grid_n);
    let mut best: Option<(f64, f64)> = None;
    for x in outer_candidates(&outer, s.ground(), &enlarged.breakpoints(), grid_n) {
        let v = m.sup_over(x, &enlarged.eval_at(x)?)?.value;
        if best.is_none_or(|(bv, _)| v < bv) {
            best = Some((v, x));
        }
    }
    let (v, x) = best.expect("closed nonempty set has candidates");
    Ok(MarginalValue { value: 0.0 - v, attained: outer.contains(x), argpoint: Some(x) })
}

/// `g(x) >= inf_{y∈F_ε(x)} f(x,y)` on the grid points of `C_X`.
pub fn pardalos_check<G: ScalarFn, E: ScalarFn>(
    f: &Expr,
    g: &G,
    map: &PiecewiseMap,
    eps: &E,
    c_x: &IntervalSet,
    grid_n: usize,
    tol: f64,
) -> CheckResult {
    let m = Marginal::new(f, grid_n);
    let mut witnesses = Vec::new();
    for x in outer_candidates(c_x, map.ground(), &[], grid_n) {
        let e = match eps.at(x) {
            Ok(e) if e > 0.0 => e,
            Ok(e) => {
                witnesses.push(Witness::new("eps is not positive").at("x", x).value("eps", e));
                continue;
            }
            Err(err) => {
                witnesses.push(Witness::new(err.to_string()).at("x", x));
                continue;
            }
        };
        let inf = map.eval_enlarged(x, e).map_err(MarginalError::from).and_then(|set| m.inf_over(x, &set));
        match (inf, g.at(x)) {
            (Ok(inf), Ok(gx)) if gx >= inf.value - tol => {}
            (Ok(inf), Ok(gx)) => witnesses.push(
                Witness::new("g(x) is below the infimum over the enlarged image")
                    .at("x", x)
                    .value("g(x)", gx)
                    .value("inf", inf.value)
                    .value("eps", e),
            ),
            (Err(err), _) => witnesses.push(Witness::new(err.to_string()).at("x", x)),
            (_, Err(err)) => witnesses.push(Witness::new(err.to_string()).at("x", x)),
        }
    }
    CheckResult::new("pardalos_condition", false, Some(grid_n), witnesses)
}
