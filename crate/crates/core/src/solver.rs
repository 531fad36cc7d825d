//! Exact, ε- and approximate solutions with re-checkable certificates.
//!
//! When `K` is piecewise constant and `f(x,y) = a0 + a1·x + (b0 + b1·x)·y`,
//! the marginal `m(x) = sup_{y∈K(x)} f(x,y)` is, on each piece, the maximum of
//! the affine functions `x ↦ f(x,c)` over the image endpoints `c`. Sublevel
//! sets of `m` are then intersections of half-lines and its infimum over an
//! interval sits at an endpoint or a crossing, so every decision is exact.
//! Anything else goes through grid search with `tol_cert`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{EvalError, Expr};
use crate::intervals::{Interval, IntervalSet};
use crate::marginal::{outer_candidates, Marginal, MarginalError, MarginalValue};
use crate::model::{CheckResult, Scenario, Tolerances, Witness};
use crate::setmap::{MapError, PiecewiseMap};
use crate::uniform_grid;

const MAX_ALTERNATES: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("eps = {eps} is outside (0, eps0) with eps0 = {eps0}")]
    EpsOutOfRange { eps: f64, eps0: f64 },
    #[error("fix K_eps is empty for eps = {0}; K_eps should have a fixed point under the hypotheses")]
    EmptyFixedSet(f64),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Marginal(#[from] MarginalError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    ExactSolution,
    ApproxSolution,
    EpsSolution,
    Nonexistence,
}

/// What a certificate is about.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Problem {
    /// `x ∈ fix K` with `sup_{K(x)} f(x,·) <= 0`.
    Exact,
    /// `x ∈ fix K` with `sup_{K(x)} f(x,·) <= level`.
    EpsLevel { level: f64 },
    /// `x ∈ cl fix K_ε` with `sup_{K_ε(x)} f(x,·) <= 0`.
    Approx { eps: f64 },
}

impl Problem {
    fn level(&self) -> f64 {
        match self {
            Problem::EpsLevel { level } => *level,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub kind: CertificateKind,
    pub problem: Problem,
    pub point: Option<f64>,
    pub eps: Option<f64>,
    /// At `point` for solutions; the infimum of `m` over the searched set
    /// for nonexistence.
    pub sup_value: MarginalValue,
    pub searched: IntervalSet,
    pub alternates: Vec<f64>,
    pub evidence: String,
    pub exact: bool,
    pub hypothesis_violation: bool,
}

/// `f = a0 + a1·x + (b0 + b1·x)·y`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Bilinear {
    a0: f64,
    a1: f64,
    b0: f64,
    b1: f64,
}

impl Bilinear {
    fn detect(f: &Expr) -> Option<Bilinear> {
        let (a, b) = f.affine_in("y")?;
        let (a0, a1) = a.affine_in("x")?;
        let (b0, b1) = b.affine_in("x")?;
        let at0 = |e: &Expr| e.eval(&[0.0, 0.0]).ok();
        Some(Bilinear { a0: at0(&a0)?, a1: at0(&a1)?, b0: at0(&b0)?, b1: at0(&b1)? })
    }

    /// `x ↦ f(x, c)` as `(intercept, slope)`.
    fn line(&self, c: f64) -> (f64, f64) {
        (self.a0 + self.b0 * c, self.a1 + self.b1 * c)
    }
}

/// Exact facts about `m` on a set.
#[derive(Debug, Clone, PartialEq)]
struct Analysis {
    inf: f64,
    inf_at: f64,
    inf_attained: bool,
    sublevel: IntervalSet,
}

fn lines_of(map: &PiecewiseMap, f: Bilinear, piece: usize) -> Vec<(f64, f64)> {
    map.pieces()[piece].image.iter().flat_map(|p| [f.line(p.lo.a), f.line(p.hi.a)]).collect()
}

fn max_line(lines: &[(f64, f64)], x: f64) -> f64 {
    lines.iter().map(|&(c0, c1)| c0 + c1 * x).fold(f64::NEG_INFINITY, f64::max)
}

fn sublevel_on(lines: &[(f64, f64)], part: &Interval, level: f64) -> Option<Interval> {
    lines.iter().try_fold(*part, |acc, &(c0, c1)| acc.solve_affine(c0 - level, c1, false))
}

/// Infimum of `m` and the set `{m <= level}` over `searched`, piece by piece.
fn analyse(map: &PiecewiseMap, f: Bilinear, searched: &IntervalSet, level: f64) -> Option<Analysis> {
    let mut best: Option<(f64, f64, bool)> = None;
    let mut sublevel = Vec::new();
    for (i, piece) in map.pieces().iter().enumerate() {
        let lines = lines_of(map, f, i);
        for part in searched.intersect_interval(&piece.domain).parts() {
            sublevel.extend(sublevel_on(&lines, part, level));
            let (lo, hi) = (part.lo().value, part.hi().value);
            let mut cands = vec![lo, hi];
            for (j, &(c0, c1)) in lines.iter().enumerate() {
                for &(d0, d1) in &lines[j + 1..] {
                    if c1 != d1 {
                        let t = (d0 - c0) / (c1 - d1);
                        if lo < t && t < hi {
                            cands.push(t);
                        }
                    }
                }
            }
            for t in cands {
                let v = max_line(&lines, t);
                if best.is_none_or(|(bv, _, _)| v < bv) {
                    let attained = sublevel_on(&lines, part, v).is_some();
                    best = Some((v, t, attained));
                } else if best.is_some_and(|(bv, _, ba)| v == bv && !ba) && part.contains(t) {
                    best = Some((v, t, true));
                }
            }
        }
    }
    let (inf, inf_at, inf_attained) = best?;
    Some(Analysis { inf, inf_at, inf_attained, sublevel: IntervalSet::from_parts(sublevel) })
}

/// Exact `inf_{x∈set} sup_{y∈map(x)} f(x,y)`, including limits at the open
/// ends of `set`. `None` unless `map` is piecewise constant and `f` is
/// affine in `y` with coefficients affine in `x`, or when `set` is empty.
pub fn exact_infimum(map: &PiecewiseMap, f: &Expr, set: &IntervalSet) -> Option<MarginalValue> {
    if !map.is_piecewise_constant() {
        return None;
    }
    let a = analyse(map, Bilinear::detect(f)?, set, f64::NEG_INFINITY)?;
    Some(MarginalValue { value: a.inf, attained: a.inf_attained, argpoint: Some(a.inf_at) })
}

struct Search<'a> {
    scenario: &'a Scenario,
    map: PiecewiseMap,
    searched: IntervalSet,
    problem: Problem,
    grid_n: usize,
    tol: Tolerances,
}

impl Search<'_> {
    fn exact_path(&self) -> Option<Bilinear> {
        if self.map.is_piecewise_constant() {
            Bilinear::detect(self.scenario.f())
        } else {
            None
        }
    }

    fn sup_at(&self, m: &Marginal, x: f64) -> Result<MarginalValue, SolverError> {
        Ok(m.sup_over(x, &self.map.eval_at(x)?)?)
    }

    fn eps(&self) -> Option<f64> {
        match self.problem {
            Problem::Approx { eps } => Some(eps),
            Problem::EpsLevel { level } => Some(level),
            Problem::Exact => None,
        }
    }

    fn solution_kind(&self) -> CertificateKind {
        match self.problem {
            Problem::Exact => CertificateKind::ExactSolution,
            Problem::EpsLevel { .. } => CertificateKind::EpsSolution,
            Problem::Approx { .. } => CertificateKind::ApproxSolution,
        }
    }

    fn solution(
        &self,
        m: &Marginal,
        x: f64,
        alternates: Vec<f64>,
        exact: bool,
        how: &str,
    ) -> Result<Certificate, SolverError> {
        let sup_value = self.sup_at(m, x)?;
        Ok(Certificate {
            kind: self.solution_kind(),
            problem: self.problem,
            point: Some(x),
            eps: self.eps(),
            sup_value,
            searched: self.searched.clone(),
            alternates,
            evidence: format!("x = {x} lies in {} and sup f(x, ·) = {} ({how})", self.searched, sup_value.value),
            exact,
            hypothesis_violation: false,
        })
    }

    fn nonexistence(&self, inf: MarginalValue, exact: bool) -> Certificate {
        let level = self.problem.level();
        let strictness = if inf.attained { "attained" } else { "not attained" };
        let violation = matches!(self.problem, Problem::Approx { .. });
        let mut evidence = format!(
            "min over {} of sup f(x, ·) is {} ({strictness} at x = {}), above {level}",
            self.searched,
            inf.value,
            inf.argpoint.unwrap_or(f64::NAN)
        );
        if violation {
            evidence.push_str("; a hypothesis of the existence theorem must fail");
        }
        Certificate {
            kind: CertificateKind::Nonexistence,
            problem: self.problem,
            point: None,
            eps: self.eps(),
            sup_value: inf,
            searched: self.searched.clone(),
            alternates: Vec::new(),
            evidence,
            exact,
            hypothesis_violation: violation,
        }
    }

    fn candidates(&self) -> Vec<f64> {
        outer_candidates(&self.searched, self.map.ground(), &self.map.breakpoints(), self.grid_n)
    }

    /// Smallest certifying point plus alternates, or a nonexistence certificate.
    fn first(&self) -> Result<Certificate, SolverError> {
        let m = Marginal::new(self.scenario.f(), self.grid_n);
        let level = self.problem.level();
        if let Some(bl) = self.exact_path() {
            let Some(a) = analyse(&self.map, bl, &self.searched, level) else {
                return Ok(self.empty_search());
            };
            let sub = &a.sublevel;
            match sub.representative() {
                Some(x) => {
                    let mut alts: Vec<f64> = sub.parts().iter().skip(1).filter_map(part_point).collect();
                    alts.extend(self.candidates().into_iter().filter(|&t| t != x && sub.contains(t)));
                    alts.sort_by(f64::total_cmp);
                    alts.dedup();
                    alts.truncate(MAX_ALTERNATES);
                    self.solution(&m, x, alts, true, "exact affine analysis")
                }
                None => {
                    let inf = MarginalValue { value: a.inf, attained: a.inf_attained, argpoint: Some(a.inf_at) };
                    Ok(self.nonexistence(inf, true))
                }
            }
        } else {
            let mut ok = Vec::new();
            let mut best: Option<MarginalValue> = None;
            for x in self.candidates() {
                let v = self.sup_at(&m, x)?;
                if v.value <= level + self.tol.cert {
                    ok.push(x);
                }
                if best.is_none_or(|b| v.value < b.value) {
                    best = Some(MarginalValue { value: v.value, attained: true, argpoint: Some(x) });
                }
            }
            match ok.split_first() {
                Some((&x, rest)) => {
                    let alts = rest.iter().copied().take(MAX_ALTERNATES).collect();
                    self.solution(&m, x, alts, false, "grid search")
                }
                None => match best {
                    Some(b) => Ok(self.nonexistence(b, false)),
                    None => Ok(self.empty_search()),
                },
            }
        }
    }

    fn empty_search(&self) -> Certificate {
        let nothing = MarginalValue { value: f64::INFINITY, attained: false, argpoint: None };
        let mut c = self.nonexistence(nothing, true);
        c.evidence = format!("the searched set {} is empty", self.searched);
        c
    }
}

fn part_point(p: &Interval) -> Option<f64> {
    IntervalSet::from(*p).representative()
}

/// Solutions of the quasiequilibrium problem on `fix K`: every certifying
/// grid point, part endpoint or breakpoint, or a single nonexistence
/// certificate.
pub fn exact_solve(s: &Scenario, grid_n: usize, tol: &Tolerances) -> Result<Vec<Certificate>, SolverError> {
    let search = Search {
        scenario: s,
        map: s.map().clone(),
        searched: s.map().fixed_point_set(),
        problem: Problem::Exact,
        grid_n,
        tol: *tol,
    };
    let m = Marginal::new(s.f(), grid_n);
    let mut points: Vec<f64>;
    let exact;
    if let Some(bl) = search.exact_path() {
        exact = true;
        let Some(a) = analyse(&search.map, bl, &search.searched, 0.0) else {
            return Ok(vec![search.empty_search()]);
        };
        points = search.candidates().into_iter().filter(|&x| a.sublevel.contains(x)).collect();
        points.extend(a.sublevel.parts().iter().filter_map(part_point));
        if points.is_empty() {
            let inf = MarginalValue { value: a.inf, attained: a.inf_attained, argpoint: Some(a.inf_at) };
            return Ok(vec![search.nonexistence(inf, true)]);
        }
    } else {
        exact = false;
        points = Vec::new();
        let mut best: Option<MarginalValue> = None;
        for x in search.candidates() {
            let v = search.sup_at(&m, x)?;
            if v.value <= tol.cert {
                points.push(x);
            }
            if best.is_none_or(|b| v.value < b.value) {
                best = Some(MarginalValue { value: v.value, attained: true, argpoint: Some(x) });
            }
        }
        if points.is_empty() {
            return Ok(vec![match best {
                Some(b) => search.nonexistence(b, false),
                None => search.empty_search(),
            }]);
        }
    }
    points.sort_by(f64::total_cmp);
    points.dedup();
    let how = if exact { "exact affine analysis" } else { "grid search" };
    points.iter().map(|&x| search.solution(&m, x, Vec::new(), exact, how)).collect()
}

/// An ε-solution `x ∈ fix K` with `sup_{K(x)} f(x,·) <= eps_level`, or a
/// nonexistence certificate carrying the infimum of that sup over `fix K`.
pub fn eps_solution_search(
    s: &Scenario,
    eps_level: f64,
    grid_n: usize,
    tol: &Tolerances,
) -> Result<Certificate, SolverError> {
    Search {
        scenario: s,
        map: s.map().clone(),
        searched: s.map().fixed_point_set(),
        problem: Problem::EpsLevel { level: eps_level },
        grid_n,
        tol: *tol,
    }
    .first()
}

/// A point of `cl fix K_ε` with `f(x,y) <= 0` for all `y ∈ K_ε(x)`.
pub fn approx_solve(s: &Scenario, eps: f64, grid_n: usize, tol: &Tolerances) -> Result<Certificate, SolverError> {
    if !(eps > 0.0 && eps < s.eps0()) {
        return Err(SolverError::EpsOutOfRange { eps, eps0: s.eps0() });
    }
    let map = s.map().enlarge(eps)?;
    let fix = map.fixed_point_set();
    if fix.is_empty() {
        return Err(SolverError::EmptyFixedSet(eps));
    }
    Search { scenario: s, map, searched: fix.closure(), problem: Problem::Approx { eps }, grid_n, tol: *tol }.first()
}

/// Brute-force `sup f(x, ·)` over `set`: endpoints of every part plus a
/// uniform grid in each. Exact when `f` is affine in `y`.
fn brute_sup(f: &Expr, x: f64, set: &IntervalSet, n: usize) -> Result<(f64, f64), EvalError> {
    let mut best = (f64::NEG_INFINITY, f64::NAN);
    for p in set.parts() {
        for y in uniform_grid(p.lo().value, p.hi().value, n) {
            let v = f.eval(&[x, y])?;
            if v > best.0 {
                best = (v, y);
            }
        }
    }
    Ok(best)
}

/// Re-checks a certificate from scratch on a grid four times finer.
pub fn verify_certificate(s: &Scenario, cert: &Certificate, grid_n: usize, tol: &Tolerances) -> CheckResult {
    let n = 4 * grid_n.max(1);
    let level = cert.problem.level();
    let mut witnesses = Vec::new();
    let image_at = |x: f64| -> Result<IntervalSet, MapError> {
        match cert.problem {
            Problem::Approx { eps } => s.map().eval_enlarged(x, eps),
            _ => s.map().eval_at(x),
        }
    };
    let in_searched = |x: f64| -> bool {
        let pointwise = |t: f64| image_at(t).is_ok_and(|im| im.contains(t));
        match cert.problem {
            Problem::Approx { eps } => {
                let closure = s.map().enlarge(eps).map(|k| k.fixed_point_set().closure());
                let near =
                    pointwise(x) || (1..=3).any(|k| pointwise(x + k as f64 * 1e-9) || pointwise(x - k as f64 * 1e-9));
                closure.is_ok_and(|c| c.contains(x)) && near
            }
            _ => pointwise(x),
        }
    };
    match cert.kind {
        CertificateKind::Nonexistence => {
            let searched = match cert.problem {
                Problem::Approx { eps } => s.map().enlarge(eps).map(|k| k.fixed_point_set().closure()),
                _ => Ok(s.map().fixed_point_set()),
            };
            match searched {
                Ok(set) => {
                    if set != cert.searched {
                        witnesses
                            .push(Witness::new(format!("searched set is {set}, certificate says {}", cert.searched)));
                    }
                    let breaks = s.map().breakpoints();
                    for x in outer_candidates(&set, s.ground(), &breaks, n) {
                        let Ok(image) = image_at(x) else { continue };
                        match brute_sup(s.f(), x, &image, 64) {
                            Ok((v, y)) if v <= level => witnesses.push(
                                Witness::new("a point of the searched set meets the level")
                                    .at("x", x)
                                    .at("y", y)
                                    .value("sup", v),
                            ),
                            Ok((v, y)) if v < cert.sup_value.value - tol.cert => witnesses.push(
                                Witness::new("sup is below the certified infimum")
                                    .at("x", x)
                                    .at("y", y)
                                    .value("sup", v)
                                    .value("claimed_inf", cert.sup_value.value),
                            ),
                            Ok(_) => {}
                            Err(e) => witnesses.push(Witness::new(e.to_string()).at("x", x)),
                        }
                    }
                }
                Err(e) => witnesses.push(Witness::new(e.to_string())),
            }
        }
        _ => match cert.point {
            None => witnesses.push(Witness::new("solution certificate without a point")),
            Some(x) => {
                if !in_searched(x) {
                    witnesses.push(Witness::new("point is not in the searched set").at("x", x));
                }
                match image_at(x).map_err(SolverError::from).and_then(|im| Ok(brute_sup(s.f(), x, &im, n)?)) {
                    Ok((v, y)) => {
                        if v > level + tol.cert {
                            witnesses.push(
                                Witness::new("f(x, y) exceeds the level")
                                    .at("x", x)
                                    .at("y", y)
                                    .value("f(x,y)", v)
                                    .value("level", level),
                            );
                        }
                        if (v - cert.sup_value.value).abs() > 1e-6 * (1.0 + v.abs()) {
                            witnesses.push(
                                Witness::new("recomputed sup differs from the certificate")
                                    .at("x", x)
                                    .value("recomputed", v)
                                    .value("claimed", cert.sup_value.value),
                            );
                        }
                    }
                    Err(e) => witnesses.push(Witness::new(e.to_string()).at("x", x)),
                }
            }
        },
    }
    CheckResult::new("certificate", cert.exact, Some(n), witnesses)
}
