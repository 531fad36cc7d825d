//! Continuous selections through a finite open cover and a distance-based
//! partition of unity.
//!
//! For a problem `(F, f, g, ε, ε′, C_X)` the auxiliary map is
//!
//! ```text
//! H(x) = F_base(x) ∩ {y ∈ C : f(x,y) < g(x) + ε′(x)}   for x ∈ C_X
//! H(x) = F_base(x)                                      otherwise
//! ```
//!
//! with `F_base = (F + ε(x)B) ∩ C` or `F` itself. Each anchor `y_i` comes
//! with the region `U_i = {x : y_i ∈ H(x)}`; the selection is
//! `φ(x) = Σ λ_i(x) y_i` with `λ_i(x) = d(x, C∖U_i) / Σ_j d(x, C∖U_j)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{EvalError, Expr};
use crate::intervals::{Endpoint, Interval, IntervalSet};
use crate::marginal::{g_value, MarginalError};
use crate::model::{CheckResult, Scenario, Witness};
use crate::setmap::{MapError, PiecewiseMap};
use crate::uniform_grid;

/// Cells used when a level set has to be bracketed numerically.
const BRACKET_CELLS: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("C_X must be a closed subset of the ground set, got {0}")]
    BadCx(String),
    #[error("{name} must be positive on the ground set; it is {value} at x = {x}")]
    NotPositive { name: &'static str, x: f64, value: f64 },
    #[error("open-sections mode needs F to have open lower sections: {0}")]
    NoOpenSections(String),
    #[error("H(x) is empty at x = {0}; the inequality condition on g fails there")]
    EmptyH(f64),
    #[error("cover still misses {uncovered} after {anchors} anchors")]
    CoverFailed { uncovered: String, anchors: usize },
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Marginal(#[from] MarginalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Select from `(F(x) + ε(x)B) ∩ C`.
    Enlarged,
    /// Select from `F(x)`; needs open lower sections.
    OpenSections,
}

#[derive(Debug, Clone)]
pub struct SelectionProblem {
    map: PiecewiseMap,
    f: Expr,
    g: Expr,
    eps: Expr,
    eps_prime: Expr,
    c_x: IntervalSet,
    mode: SelectionMode,
    tol_root: f64,
    enlarged: Option<PiecewiseMap>,
    f_in_y: Option<(Expr, Expr)>,
    gap_in_x: Option<[(f64, f64); 2]>,
}

impl SelectionProblem {
    /// `f` is over `(x, y)`; `g`, `eps`, `eps_prime` are over `x`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        map: PiecewiseMap,
        f: Expr,
        g: Expr,
        eps: Expr,
        eps_prime: Expr,
        c_x: IntervalSet,
        mode: SelectionMode,
        tol_root: f64,
    ) -> Result<Self, SelectionError> {
        let ground = *map.ground();
        if !c_x.is_closed() || !c_x.is_subset(&IntervalSet::from(ground)) {
            return Err(SelectionError::BadCx(c_x.to_string()));
        }
        let (lo, hi) = (ground.lo().value, ground.hi().value);
        for (name, e) in [("eps", &eps), ("eps_prime", &eps_prime)] {
            for x in uniform_grid(lo, hi, 512) {
                let value = e.eval(&[x])?;
                if value.is_nan() || value <= 0.0 {
                    return Err(SelectionError::NotPositive { name, x, value });
                }
            }
        }
        if mode == SelectionMode::OpenSections {
            let check = map.check_open_lower_sections(512);
            if !check.passed {
                return Err(SelectionError::NoOpenSections(check.witnesses[0].detail.clone()));
            }
        }
        let enlarged = match (mode, eps.is_constant()) {
            (SelectionMode::Enlarged, true) => Some(map.enlarge(eps.eval(&[0.0])?)?),
            _ => None,
        };
        let f_in_y = f.affine_in("y");
        let gap_in_x = affine_coefficients(&f, &g, &eps_prime)?;
        Ok(SelectionProblem { map, f, g, eps, eps_prime, c_x, mode, tol_root, enlarged, f_in_y, gap_in_x })
    }

    /// The setting of the approximate-solution theorem: select from `K_ε`
    /// with `-f`, `C_X = cl fix K_ε` and the constant `g` from [`g_value`].
    pub fn approximate_solution(s: &Scenario, eps: f64, eps_prime: f64, grid_n: usize) -> Result<Self, SelectionError> {
        let g = g_value(s, eps, grid_n)?.value;
        let c_x = s.map().enlarge(eps)?.fixed_point_set().closure();
        SelectionProblem::new(
            s.map().clone(),
            s.f().negated(),
            Expr::constant(g, &["x"]),
            Expr::constant(eps, &["x"]),
            Expr::constant(eps_prime, &["x"]),
            c_x,
            SelectionMode::Enlarged,
            1e-10,
        )
    }

    pub fn ground(&self) -> &Interval {
        self.map.ground()
    }

    pub fn c_x(&self) -> &IntervalSet {
        &self.c_x
    }

    pub fn mode(&self) -> SelectionMode {
        self.mode
    }

    pub fn map(&self) -> &PiecewiseMap {
        &self.map
    }

    /// Whether `H` and its lower sections are computed in closed form.
    pub fn is_exact(&self) -> bool {
        let base_exact = self.mode == SelectionMode::OpenSections || self.enlarged.is_some();
        base_exact && self.f_in_y.is_some() && self.gap_in_x.is_some()
    }

    fn level(&self, x: f64) -> Result<f64, EvalError> {
        Ok(self.g.eval(&[x])? + self.eps_prime.eval(&[x])?)
    }

    pub fn f_at(&self, x: f64, y: f64) -> Result<f64, EvalError> {
        self.f.eval(&[x, y])
    }

    /// The strict inequality `f(x,y) < g(x) + ε′(x)`.
    pub fn below_level(&self, x: f64, y: f64) -> Result<bool, EvalError> {
        Ok(self.f_at(x, y)? < self.level(x)?)
    }

    pub fn base_at(&self, x: f64) -> Result<IntervalSet, SelectionError> {
        Ok(match (self.mode, &self.enlarged) {
            (SelectionMode::OpenSections, _) => self.map.eval_at(x)?,
            (SelectionMode::Enlarged, Some(k)) => k.eval_at(x)?,
            (SelectionMode::Enlarged, None) => self.map.eval_enlarged(x, self.eps.eval(&[x])?)?,
        })
    }

    /// `H(x)`.
    pub fn h_at(&self, x: f64) -> Result<IntervalSet, SelectionError> {
        let base = self.base_at(x)?;
        if !self.c_x.contains(x) {
            return Ok(base);
        }
        let level = self.level(x)?;
        let ground = *self.ground();
        let sub = match &self.f_in_y {
            Some((a, b)) => {
                let (a, b) = (a.eval(&[x, 0.0])?, b.eval(&[x, 0.0])?);
                ground.solve_affine(a - level, b, true).map(IntervalSet::from).unwrap_or_default()
            }
            None => positive_set(|y| self.f.eval(&[x, y]).map(|v| level - v), &ground, self.tol_root)?,
        };
        Ok(base.intersect(&sub))
    }

    /// `{x ∈ C : y ∈ F_base(x)}`.
    fn base_section(&self, y: f64) -> Result<IntervalSet, SelectionError> {
        match (self.mode, &self.enlarged) {
            (SelectionMode::OpenSections, _) => Ok(self.map.lower_inverse(y)?),
            (SelectionMode::Enlarged, Some(k)) => Ok(k.lower_inverse(y)?),
            (SelectionMode::Enlarged, None) => {
                let mut parts = IntervalSet::empty();
                for piece in self.map.pieces() {
                    let h = |x: f64| self.eps.eval(&[x]).map(|e| e - piece.image_at(x).distance(y));
                    parts = parts.union(&positive_set(h, &piece.domain, self.tol_root)?);
                }
                Ok(parts)
            }
        }
    }

    /// `{x ∈ C : f(x,y) < g(x) + ε′(x)}`.
    fn level_section(&self, y: f64) -> Result<IntervalSet, SelectionError> {
        let ground = *self.ground();
        match self.gap_in_x {
            Some([(ga, gb), (ea, eb)]) => {
                let (fa, fb) = self.f_affine_x_at(y)?;
                let (c0, c1) = (fa - ga - ea, fb - gb - eb);
                Ok(ground.solve_affine(c0, c1, true).map(IntervalSet::from).unwrap_or_default())
            }
            None => Ok(positive_set(|x| Ok(self.level(x)? - self.f.eval(&[x, y])?), &ground, self.tol_root)?),
        }
    }

    fn f_affine_x_at(&self, y: f64) -> Result<(f64, f64), EvalError> {
        let (a, b) = self.f.affine_in("x").expect("checked when the problem was built");
        Ok((a.eval(&[0.0, y])?, b.eval(&[0.0, y])?))
    }

    /// The region `U(y) = {x ∈ C : y ∈ H(x)}`, reduced to its relative
    /// interior in `C`.
    pub fn region(&self, y: f64) -> Result<IntervalSet, SelectionError> {
        let ground = *self.ground();
        let outside = self.c_x.complement_in(&ground);
        let allowed = outside.union(&self.level_section(y)?);
        let u = self.base_section(y)?.intersect(&allowed);
        Ok(relative_interior(&u, &ground))
    }

    fn anchor_for(&self, x: f64) -> Result<(f64, IntervalSet), SelectionError> {
        let h = self.h_at(x)?;
        let part = h.largest_part().ok_or(SelectionError::EmptyH(x))?;
        let y = part.midpoint();
        Ok((y, self.region(y)?))
    }

    /// Greedy cover: anchors at uncovered grid points, then at points of
    /// whatever remains uncovered.
    pub fn build_selection(&self, grid_n: usize) -> Result<ContinuousSelection, SelectionError> {
        let ground = *self.ground();
        let whole = IntervalSet::from(ground);
        let cap = 10 * grid_n.max(1);
        let mut anchors: Vec<Anchor> = Vec::new();
        let mut covered = IntervalSet::empty();
        let (lo, hi) = (ground.lo().value, ground.hi().value);
        let add = |x: f64, anchors: &mut Vec<Anchor>, covered: &mut IntervalSet| -> Result<(), SelectionError> {
            let (y, region) = self.anchor_for(x)?;
            *covered = covered.union(&region);
            anchors.push(Anchor { y, region });
            Ok(())
        };
        for x in uniform_grid(lo, hi, grid_n) {
            if !covered.contains(x) {
                add(x, &mut anchors, &mut covered)?;
            }
        }
        loop {
            let uncovered = whole.difference(&covered);
            let Some(x) = uncovered.representative() else { break };
            if anchors.len() >= cap {
                return Err(SelectionError::CoverFailed { uncovered: uncovered.to_string(), anchors: anchors.len() });
            }
            let before = covered.clone();
            add(x, &mut anchors, &mut covered)?;
            if covered == before {
                return Err(SelectionError::CoverFailed { uncovered: uncovered.to_string(), anchors: anchors.len() });
            }
        }
        Ok(ContinuousSelection::new(ground, anchors))
    }

    /// Checks weights, membership, the strict inequality on `C_X`, a
    /// Lipschitz bound between neighbouring samples, and the cover itself.
    pub fn verify_selection(&self, sel: &ContinuousSelection, grid_n: usize) -> CheckResult {
        let ground = *self.ground();
        let (lo, hi) = (ground.lo().value, ground.hi().value);
        let mut witnesses = Vec::new();
        let mut xs: Vec<f64> = uniform_grid(lo, hi, grid_n).collect();
        for a in &sel.anchors {
            for p in a.region.parts() {
                for e in [p.lo().value, p.hi().value] {
                    xs.extend([e - 1e-9, e, e + 1e-9]);
                }
            }
        }
        xs.retain(|&x| ground.contains(x));
        xs.sort_by(f64::total_cmp);
        xs.dedup();

        let mut phis: Vec<Option<f64>> = Vec::with_capacity(xs.len());
        for &x in &xs {
            let Some(w) = sel.weights(x) else {
                witnesses.push(Witness::new("x is not covered by any region").at("x", x));
                phis.push(None);
                continue;
            };
            let total: f64 = w.iter().sum();
            if (total - 1.0).abs() > 1e-12 || w.iter().any(|&l| !(0.0..=1.0).contains(&l)) {
                witnesses.push(Witness::new("weights do not form a partition of unity").at("x", x).value("sum", total));
            }
            let phi = sel.eval(x).expect("covered");
            phis.push(Some(phi));
            match self.h_at(x) {
                Ok(h) if h.contains(phi) => {}
                Ok(h) => {
                    witnesses.push(Witness::new(format!("phi(x) is not in H(x) = {h}")).at("x", x).value("phi", phi))
                }
                Err(e) => witnesses.push(Witness::new(e.to_string()).at("x", x)),
            }
            if self.c_x.contains(x) {
                match (self.f_at(x, phi), self.level(x)) {
                    (Ok(v), Ok(level)) if v < level => {}
                    (Ok(v), Ok(level)) => witnesses.push(
                        Witness::new("f(x, phi(x)) < g(x) + eps'(x) fails")
                            .at("x", x)
                            .value("phi", phi)
                            .value("f", v)
                            .value("level", level),
                    ),
                    (Err(e), _) | (_, Err(e)) => witnesses.push(Witness::new(e.to_string()).at("x", x)),
                }
            }
            for (i, a) in sel.anchors.iter().enumerate() {
                if a.region.contains(x) && !self.h_at(x).is_ok_and(|h| h.contains(a.y)) {
                    witnesses.push(
                        Witness::new(format!("anchor {i} is not in H(x) on its region")).at("x", x).value("y", a.y),
                    );
                }
            }
        }

        // |φ(x) - φ(x′)| <= L |x - x′| with L = k·spread / W_min over each sample gap.
        let mut l_est: f64 = 0.0;
        let mut skipped = 0usize;
        for i in 1..xs.len() {
            let (Some(p0), Some(p1)) = (phis[i - 1], phis[i]) else { continue };
            let (x0, x1) = (xs[i - 1], xs[i]);
            match sel.local_lipschitz(x0, x1) {
                Some(l) => {
                    l_est = l_est.max(l);
                    let slack = 1e-12 * (1.0 + p0.abs().max(p1.abs()));
                    if (p1 - p0).abs() > l * (x1 - x0) + slack {
                        witnesses.push(
                            Witness::new("phi changes faster than its Lipschitz bound")
                                .at("x0", x0)
                                .at("x1", x1)
                                .value("phi0", p0)
                                .value("phi1", p1)
                                .value("bound", l),
                        );
                    }
                }
                None => skipped += 1,
            }
        }

        for (i, a) in sel.anchors.iter().enumerate() {
            if !a.region.is_relatively_open_in(&ground) {
                witnesses
                    .push(Witness::new(format!("region {i} = {} is not relatively open", a.region)).value("y", a.y));
            }
        }
        let union = sel.anchors.iter().fold(IntervalSet::empty(), |acc, a| acc.union(&a.region));
        if union != IntervalSet::from(ground) {
            witnesses.push(Witness::new(format!("regions cover only {union}")));
        }

        let mut r = CheckResult::new("selection", false, Some(grid_n), witnesses)
            .with_note(format!("anchors: {}", sel.anchors.len()))
            .with_note(format!("lipschitz_estimate: {l_est}"));
        if skipped > 0 {
            r.notes.push(format!("lipschitz bound unavailable on {skipped} sample gaps"));
        }
        r
    }
}

/// Intercepts and slopes of `g` and `ε′` when they and `f(·, y)` are all
/// affine in `x`.
fn affine_coefficients(f: &Expr, g: &Expr, eps_prime: &Expr) -> Result<Option<[(f64, f64); 2]>, EvalError> {
    if f.affine_in("x").is_none() {
        return Ok(None);
    }
    let split = |e: &Expr| -> Result<Option<(f64, f64)>, EvalError> {
        match e.affine_in("x") {
            Some((a, b)) => Ok(Some((a.eval(&[0.0])?, b.eval(&[0.0])?))),
            None => Ok(None),
        }
    };
    let (Some(gs), Some(es)) = (split(g)?, split(eps_prime)?) else { return Ok(None) };
    Ok(Some([gs, es]))
}

/// The set minus its closed endpoints that are not endpoints of `ground`.
fn relative_interior(set: &IntervalSet, ground: &Interval) -> IntervalSet {
    set.parts()
        .iter()
        .filter_map(|p| {
            let lo = if p.lo().value == ground.lo().value { p.lo() } else { Endpoint::open(p.lo().value) };
            let hi = if p.hi().value == ground.hi().value { p.hi() } else { Endpoint::open(p.hi().value) };
            Interval::try_new(lo, hi)
        })
        .collect()
}

/// Inner approximation of `{t ∈ domain : h(t) > 0}` for continuous `h`.
///
/// Sign changes on a uniform grid are bisected down to `tol`; each root is
/// replaced by the nearest bracketing point where `h > 0` and made an open
/// endpoint. Positive bumps narrower than a grid cell can be missed.
fn positive_set(
    h: impl Fn(f64) -> Result<f64, EvalError>,
    domain: &Interval,
    tol: f64,
) -> Result<IntervalSet, EvalError> {
    let (lo, hi) = (domain.lo().value, domain.hi().value);
    if lo == hi {
        return Ok(if h(lo)? > 0.0 { IntervalSet::from(*domain) } else { IntervalSet::empty() });
    }
    let ts: Vec<f64> = uniform_grid(lo, hi, BRACKET_CELLS).collect();
    let vs: Vec<f64> = ts.iter().map(|&t| h(t)).collect::<Result<_, _>>()?;
    let bisect = |mut inside: f64, mut outside: f64| -> Result<f64, EvalError> {
        while (inside - outside).abs() > tol {
            let mid = 0.5 * (inside + outside);
            if mid == inside || mid == outside {
                break;
            }
            if h(mid)? > 0.0 {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        Ok(inside)
    };
    let mut parts = Vec::new();
    for i in 0..ts.len() - 1 {
        let (t0, t1, v0, v1) = (ts[i], ts[i + 1], vs[i], vs[i + 1]);
        match (v0 > 0.0, v1 > 0.0) {
            (true, true) => parts.push(Interval::closed(t0, t1)),
            (true, false) => {
                let r = bisect(t0, t1)?;
                parts.extend(Interval::try_new(Endpoint::closed(t0), Endpoint::open(r)));
                if r == t0 {
                    parts.push(Interval::point(t0));
                }
            }
            (false, true) => {
                let r = bisect(t1, t0)?;
                parts.extend(Interval::try_new(Endpoint::open(r), Endpoint::closed(t1)));
                if r == t1 {
                    parts.push(Interval::point(t1));
                }
            }
            (false, false) => {}
        }
    }
    // Grid points where h > 0 but both neighbours fail are kept as points;
    // the caller takes relative interiors where openness matters.
    Ok(IntervalSet::from_parts(parts).intersect_interval(domain))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub y: f64,
    pub region: IntervalSet,
}

/// `φ(x) = Σ λ_i(x) y_i` over anchors `(y_i, U_i)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuousSelection {
    ground: Interval,
    anchors: Vec<Anchor>,
    #[serde(skip)]
    complements: Vec<IntervalSet>,
}

impl ContinuousSelection {
    pub fn new(ground: Interval, anchors: Vec<Anchor>) -> Self {
        let complements = anchors.iter().map(|a| a.region.complement_in(&ground)).collect();
        ContinuousSelection { ground, anchors, complements }
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    fn raw_weights(&self, x: f64) -> Vec<f64> {
        self.complements.iter().map(|c| c.distance(x)).collect()
    }

    /// `λ_i(x)`, or `None` when no region contains `x`. Regions equal to
    /// `C` have infinite distance to their complement and share the weight
    /// evenly between them.
    pub fn weights(&self, x: f64) -> Option<Vec<f64>> {
        let raw = self.raw_weights(x);
        let infinite = raw.iter().filter(|d| d.is_infinite()).count();
        if infinite > 0 {
            let share = 1.0 / infinite as f64;
            return Some(raw.iter().map(|d| if d.is_infinite() { share } else { 0.0 }).collect());
        }
        let total: f64 = raw.iter().sum();
        (total > 0.0).then(|| raw.iter().map(|d| d / total).collect())
    }

    pub fn eval(&self, x: f64) -> Option<f64> {
        let w = self.weights(x)?;
        let mut sum = 0.0;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (l, a) in w.iter().zip(&self.anchors) {
            if *l > 0.0 {
                sum += l * a.y;
                lo = lo.min(a.y);
                hi = hi.max(a.y);
            }
        }
        // Rounding can push the convex combination just outside the hull.
        Some(sum.clamp(lo, hi))
    }

    /// A bound on the Lipschitz constant of `φ` on `[x0, x1]`.
    fn local_lipschitz(&self, x0: f64, x1: f64) -> Option<f64> {
        if self.complements.iter().any(IntervalSet::is_empty) {
            return Some(0.0);
        }
        let seg = IntervalSet::from(Interval::closed(x0, x1));
        let near: Vec<usize> =
            (0..self.anchors.len()).filter(|&i| !self.anchors[i].region.intersect(&seg).is_empty()).collect();
        let k = near.len() as f64;
        let (lo, hi) = near.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            (lo.min(self.anchors[i].y), hi.max(self.anchors[i].y))
        });
        let spread = if near.is_empty() { 0.0 } else { hi - lo };
        let total = |x: f64| self.raw_weights(x).iter().sum::<f64>();
        let w_min = total(x0).max(total(x1)) - k * (x1 - x0);
        if spread == 0.0 {
            return Some(0.0);
        }
        (w_min > 0.0).then(|| k * spread / w_min)
    }

    /// `(x, φ(x))` on a uniform grid, for export.
    pub fn samples(&self, grid_n: usize) -> Vec<(f64, f64)> {
        let (lo, hi) = (self.ground.lo().value, self.ground.hi().value);
        uniform_grid(lo, hi, grid_n).filter_map(|x| self.eval(x).map(|p| (x, p))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::setmap::tests::{arb_map, counterexample_map};
    use proptest::prelude::*;

    fn scalar(v: f64) -> Expr {
        Expr::constant(v, &["x"])
    }

    fn whole() -> Interval {
        Interval::closed(0.0, 4.0)
    }

    #[test]
    fn approximate_solution_setting() {
        let s = Scenario::counterexample();
        let p = SelectionProblem::approximate_solution(&s, 0.5, 0.1, 512).unwrap();
        assert!(p.is_exact());
        assert_eq!(p.c_x().to_string(), "[0,2] ∪ [3,3.5]");
        // g = 1.5: on C_X, -f < 1.6 means y > x - 1.6.
        assert_eq!(p.h_at(3.5).unwrap().to_string(), "(1.9,3.5)");
        assert_eq!(p.h_at(2.5).unwrap().to_string(), "[0,1.5)");
        let sel = p.build_selection(512).unwrap();
        assert!(sel.anchors().len() <= 6, "{} anchors", sel.anchors().len());
        let r = p.verify_selection(&sel, 512);
        assert!(r.passed, "{:?}", r.witnesses);
    }

    #[test]
    fn constant_map_single_anchor() {
        let map = PiecewiseMap::constant(whole(), whole()).unwrap();
        let p = SelectionProblem::new(
            map,
            Expr::parse("0", &["x", "y"]).unwrap(),
            scalar(1.0),
            scalar(0.5),
            scalar(0.1),
            IntervalSet::from(whole()),
            SelectionMode::Enlarged,
            1e-10,
        )
        .unwrap();
        let sel = p.build_selection(512).unwrap();
        assert_eq!(sel.anchors().len(), 1);
        assert_eq!(sel.anchors()[0].y, 2.0);
        assert_eq!(sel.anchors()[0].region, IntervalSet::from(whole()));
        assert_eq!(sel.eval(3.1), Some(2.0));
        assert!(p.verify_selection(&sel, 512).passed);
    }

    #[test]
    fn open_sections_mode_selects_from_k() {
        let k = counterexample_map();
        let p = SelectionProblem::new(
            k.clone(),
            Expr::parse("y - x", &["x", "y"]).unwrap(),
            scalar(1e6),
            scalar(0.5),
            scalar(0.1),
            IntervalSet::from(whole()),
            SelectionMode::OpenSections,
            1e-10,
        )
        .unwrap();
        let sel = p.build_selection(512).unwrap();
        for (x, phi) in sel.samples(512) {
            assert!(k.eval_at(x).unwrap().contains(phi), "x = {x}");
        }
        assert!(p.verify_selection(&sel, 512).passed);
    }

    #[test]
    fn open_sections_mode_rejects_closed_sections() {
        let bad = PiecewiseMap::new(
            whole(),
            vec![
                crate::Piece::constant(Interval::closed_open(0.0, 1.0), Interval::closed(2.0, 4.0)),
                crate::Piece::constant(Interval::closed(1.0, 2.0), Interval::closed(0.0, 1.0)),
                crate::Piece::constant(Interval::open_closed(2.0, 4.0), Interval::closed(2.0, 4.0)),
            ],
        )
        .unwrap();
        let err = SelectionProblem::new(
            bad,
            Expr::parse("0", &["x", "y"]).unwrap(),
            scalar(1.0),
            scalar(0.5),
            scalar(0.1),
            IntervalSet::empty(),
            SelectionMode::OpenSections,
            1e-10,
        )
        .unwrap_err();
        assert!(matches!(err, SelectionError::NoOpenSections(_)));
    }

    #[test]
    fn tampered_selection_fails_membership() {
        let s = Scenario::counterexample();
        let p = SelectionProblem::approximate_solution(&s, 0.5, 0.1, 512).unwrap();
        // y = 3.9 is not in K_ε(x) = [0,1.5) for x ∈ [2,3].
        let sel = ContinuousSelection::new(whole(), vec![Anchor { y: 3.9, region: IntervalSet::from(whole()) }]);
        let r = p.verify_selection(&sel, 64);
        assert!(!r.passed);
        let w = r.witnesses.iter().find(|w| w.detail.starts_with("phi(x) is not in H")).unwrap();
        let x = w.at["x"];
        assert!(!p.h_at(x).unwrap().contains(3.9));
    }

    #[test]
    fn lowering_eps_prime_after_construction_is_witnessed() {
        let s = Scenario::counterexample();
        let p = SelectionProblem::approximate_solution(&s, 0.5, 0.1, 512).unwrap();
        let sel = p.build_selection(512).unwrap();
        let tight = SelectionProblem::approximate_solution(&s, 0.5, 0.01, 512).unwrap();
        let r = tight.verify_selection(&sel, 512);
        for w in r.witnesses.iter().filter(|w| w.detail.starts_with("f(x, phi(x))")) {
            let (x, phi) = (w.at["x"], w.values["phi"]);
            assert!(!tight.below_level(x, phi).unwrap());
        }
    }

    #[test]
    fn numeric_paths_agree_with_exact_paths() {
        // Variable ε and a non-affine f force bracketing.
        let k = counterexample_map();
        let p = SelectionProblem::new(
            k,
            Expr::parse("(x - y) * (1 + 0 * y * y)", &["x", "y"]).unwrap(),
            scalar(1.5),
            Expr::parse("0.5 + 0 * x * x", &["x"]).unwrap(),
            scalar(0.1),
            IntervalSet::from(Interval::closed(3.0, 3.5)),
            SelectionMode::Enlarged,
            1e-10,
        )
        .unwrap();
        assert!(!p.is_exact());
        let h = p.h_at(3.25).unwrap();
        assert_eq!(h.parts().len(), 1);
        assert!((h.parts()[0].lo().value - 1.65).abs() < 1e-9);
        let sel = p.build_selection(256).unwrap();
        let r = p.verify_selection(&sel, 256);
        assert!(r.passed, "{:?}", r.witnesses);
    }

    #[test]
    fn weights_rule() {
        let sel = ContinuousSelection::new(
            whole(),
            vec![
                Anchor { y: 1.0, region: "[0,2)".parse().unwrap() },
                Anchor { y: 3.0, region: "(1,4]".parse().unwrap() },
            ],
        );
        assert_eq!(sel.weights(0.5), Some(vec![1.0, 0.0]));
        assert_eq!(sel.weights(1.5), Some(vec![0.5, 0.5]));
        assert_eq!(sel.eval(1.5), Some(2.0));
        assert_eq!(sel.eval(3.0), Some(3.0));
        let gap = ContinuousSelection::new(whole(), vec![Anchor { y: 1.0, region: "[0,2)".parse().unwrap() }]);
        assert_eq!(gap.weights(3.0), None);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn random_lsc_maps_admit_selections(k in arb_map(false), e in 1u32..8) {
            prop_assume!(k.check_lsc(64, 1e-6).passed);
            let s = Scenario::new("r", k, "y - x", 1.0).unwrap();
            let eps = e as f64 / 8.0;
            prop_assume!(!s.map().enlarge(eps).unwrap().fixed_point_set().is_empty());
            let p = SelectionProblem::approximate_solution(&s, eps, 0.1, 128).unwrap();
            let sel = p.build_selection(128).unwrap();
            let r = p.verify_selection(&sel, 128);
            prop_assert!(r.passed, "{:?}", r.witnesses.first());
            for (x, phi) in sel.samples(128) {
                prop_assert!(s.map().eval_enlarged(x, eps).unwrap().contains(phi));
            }
        }
    }
}
