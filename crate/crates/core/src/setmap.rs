//! Piecewise set-valued maps `K: C ⇉ C`.
//!
//! The ground set `C` is a closed interval partitioned into finitely many
//! piece domains. On each piece the image is a finite union of intervals
//! whose endpoints are affine in `x`, each with its own open/closed flag.
//! Lower inverses and fixed-point sets are solved exactly from the affine
//! endpoint inequalities.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::intervals::{cmp_lower, cmp_upper, Endpoint, Interval, IntervalError, IntervalSet, Kind};
use crate::model::{CheckResult, Witness};
use crate::uniform_grid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("x = {x} lies outside the ground set {ground}")]
    OutsideGround { x: f64, ground: String },
    #[error("ground set must be a closed interval, got {0}")]
    GroundNotClosed(String),
    #[error("piece domains do not partition the ground set: {0}")]
    Partition(String),
    #[error("piece {piece}: {reason}")]
    InvalidImage { piece: usize, reason: String },
    #[error("piece {piece} has a multi-part image but the map must be convex-valued")]
    NotConvex { piece: usize },
    #[error("enlargement radius must be positive and finite, got {0}")]
    BadRadius(f64),
    #[error(transparent)]
    Interval(#[from] IntervalError),
}

/// The bound `a + b·x` with an endpoint kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineBound {
    pub a: f64,
    pub b: f64,
    pub kind: Kind,
}

impl AffineBound {
    pub fn constant(a: f64, kind: Kind) -> Self {
        AffineBound { a, b: 0.0, kind }
    }

    pub fn at(&self, x: f64) -> f64 {
        if self.b == 0.0 {
            self.a
        } else {
            self.a + self.b * x
        }
    }

    fn endpoint(&self, x: f64) -> Endpoint {
        Endpoint { value: self.at(x), kind: self.kind }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImagePart {
    pub lo: AffineBound,
    pub hi: AffineBound,
}

impl ImagePart {
    pub fn constant(iv: Interval) -> Self {
        ImagePart {
            lo: AffineBound::constant(iv.lo().value, iv.lo().kind),
            hi: AffineBound::constant(iv.hi().value, iv.hi().kind),
        }
    }

    pub fn at(&self, x: f64) -> Option<Interval> {
        Interval::try_new(self.lo.endpoint(x), self.hi.endpoint(x))
    }

    fn is_constant(&self) -> bool {
        self.lo.b == 0.0 && self.hi.b == 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub domain: Interval,
    pub image: Vec<ImagePart>,
}

impl Piece {
    pub fn constant(domain: Interval, image: Interval) -> Self {
        Piece { domain, image: vec![ImagePart::constant(image)] }
    }

    /// The image formula evaluated at `x`, whether or not `x` lies in the domain.
    pub fn image_at(&self, x: f64) -> IntervalSet {
        self.image.iter().filter_map(|p| p.at(x)).collect()
    }

    pub fn is_constant(&self) -> bool {
        self.image.iter().all(ImagePart::is_constant)
    }
}

/// A set-valued map on a closed interval, given piece by piece.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseMap {
    ground: Interval,
    pieces: Vec<Piece>,
}

impl PiecewiseMap {
    /// Validates that the domains partition `ground` and that every image is
    /// a nonempty subset of `ground` throughout its domain.
    pub fn new(ground: Interval, mut pieces: Vec<Piece>) -> Result<Self, MapError> {
        if !ground.is_closed() {
            return Err(MapError::GroundNotClosed(ground.to_string()));
        }
        pieces.sort_by(|p, q| cmp_lower(&p.domain.lo(), &q.domain.lo()));
        check_partition(&ground, &pieces)?;
        for (i, piece) in pieces.iter().enumerate() {
            check_image(&ground, piece).map_err(|reason| MapError::InvalidImage { piece: i, reason })?;
        }
        Ok(PiecewiseMap { ground, pieces })
    }

    pub fn constant(ground: Interval, image: Interval) -> Result<Self, MapError> {
        Self::new(ground, vec![Piece::constant(ground, image)])
    }

    pub fn ground(&self) -> &Interval {
        &self.ground
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn is_piecewise_constant(&self) -> bool {
        self.pieces.iter().all(Piece::is_constant)
    }

    pub fn is_convex_valued(&self) -> bool {
        self.pieces.iter().all(|p| p.image.len() == 1)
    }

    pub fn require_convex(&self) -> Result<(), MapError> {
        match self.pieces.iter().position(|p| p.image.len() != 1) {
            Some(piece) => Err(MapError::NotConvex { piece }),
            None => Ok(()),
        }
    }

    /// Sorted, deduplicated domain endpoint values (including the ends of `C`).
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.pieces.iter().flat_map(|p| [p.domain.lo().value, p.domain.hi().value]).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    fn check_in_ground(&self, t: f64) -> Result<(), MapError> {
        if self.ground.contains(t) {
            Ok(())
        } else {
            Err(MapError::OutsideGround { x: t, ground: self.ground.to_string() })
        }
    }

    pub fn piece_at(&self, x: f64) -> Option<&Piece> {
        let idx = self.pieces.partition_point(|p| p.domain.hi().value < x);
        self.pieces[idx..].iter().take(2).find(|p| p.domain.contains(x))
    }

    /// `K(x)`.
    pub fn eval_at(&self, x: f64) -> Result<IntervalSet, MapError> {
        self.check_in_ground(x)?;
        Ok(self.piece_at(x).map(|p| p.image_at(x)).unwrap_or_default())
    }

    /// `(K(x) + (-eps, eps)) ∩ C`, computed pointwise.
    pub fn eval_enlarged(&self, x: f64, eps: f64) -> Result<IntervalSet, MapError> {
        let image = self.eval_at(x)?;
        if image.is_empty() {
            return Ok(image);
        }
        Ok(image.minkowski_open_ball(eps)?.intersect_interval(&self.ground))
    }

    /// The lower section `{x ∈ C : y ∈ K(x)}`.
    pub fn lower_inverse(&self, y: f64) -> Result<IntervalSet, MapError> {
        self.check_in_ground(y)?;
        let mut parts = Vec::new();
        for piece in &self.pieces {
            for part in &piece.image {
                let found = piece
                    .domain
                    .solve_affine(part.lo.a - y, part.lo.b, part.lo.kind == Kind::Open)
                    .and_then(|d| d.solve_affine(y - part.hi.a, -part.hi.b, part.hi.kind == Kind::Open));
                parts.extend(found);
            }
        }
        Ok(IntervalSet::from_parts(parts))
    }

    /// `fix K = {x ∈ C : x ∈ K(x)}`.
    pub fn fixed_point_set(&self) -> IntervalSet {
        let mut parts = Vec::new();
        for piece in &self.pieces {
            for part in &piece.image {
                let found = piece
                    .domain
                    .solve_affine(part.lo.a, part.lo.b - 1.0, part.lo.kind == Kind::Open)
                    .and_then(|d| d.solve_affine(-part.hi.a, 1.0 - part.hi.b, part.hi.kind == Kind::Open));
                parts.extend(found);
            }
        }
        IntervalSet::from_parts(parts)
    }

    /// `K_ε(x) = (K(x) + εB) ∩ C` as a piecewise map.
    ///
    /// Piece domains are kept; a domain is split only where an affine bound
    /// crosses the boundary of `C` or two enlarged parts start or stop
    /// overlapping, so that each resulting piece again has affine bounds.
    pub fn enlarge(&self, eps: f64) -> Result<PiecewiseMap, MapError> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(MapError::BadRadius(eps));
        }
        let mut pieces = Vec::new();
        for piece in &self.pieces {
            let cuts = self.enlargement_cuts(piece, eps);
            for domain in split_domain(&piece.domain, &cuts) {
                let rep = if domain.is_singleton() { domain.lo().value } else { domain.midpoint() };
                pieces.push(Piece { domain, image: self.enlarged_image(piece, eps, rep) });
            }
        }
        PiecewiseMap::new(self.ground, pieces)
    }

    fn enlarged_bounds(&self, part: &ImagePart, eps: f64, x: f64) -> ImagePart {
        let (c_lo, c_hi) = (self.ground.lo().value, self.ground.hi().value);
        let lo = if part.lo.at(x) - eps < c_lo {
            AffineBound::constant(c_lo, Kind::Closed)
        } else {
            AffineBound { a: part.lo.a - eps, b: part.lo.b, kind: Kind::Open }
        };
        let hi = if part.hi.at(x) + eps > c_hi {
            AffineBound::constant(c_hi, Kind::Closed)
        } else {
            AffineBound { a: part.hi.a + eps, b: part.hi.b, kind: Kind::Open }
        };
        ImagePart { lo, hi }
    }

    fn enlarged_image(&self, piece: &Piece, eps: f64, rep: f64) -> Vec<ImagePart> {
        let mut parts: Vec<(ImagePart, Interval)> = piece
            .image
            .iter()
            .filter_map(|p| {
                let e = self.enlarged_bounds(p, eps, rep);
                e.at(rep).map(|iv| (e, iv))
            })
            .collect();
        parts.sort_by(|a, b| cmp_lower(&a.1.lo(), &b.1.lo()));
        let mut out: Vec<(ImagePart, Interval)> = Vec::new();
        for (part, iv) in parts {
            match out.last_mut() {
                Some((cur, cur_iv)) if cur_iv.merges_with(&iv) => {
                    if cmp_upper(&iv.hi(), &cur_iv.hi()) == Ordering::Greater {
                        cur.hi = part.hi;
                        *cur_iv = Interval::try_new(cur_iv.lo(), iv.hi()).unwrap_or(*cur_iv);
                    }
                }
                _ => out.push((part, iv)),
            }
        }
        out.into_iter().map(|(p, _)| p).collect()
    }

    /// Points of the domain where the combinatorial shape of the enlarged
    /// image can change.
    fn enlargement_cuts(&self, piece: &Piece, eps: f64) -> Vec<f64> {
        let (c_lo, c_hi) = (self.ground.lo().value, self.ground.hi().value);
        // Each entry is (c0, c1) for the affine expression c0 + c1·x.
        let mut lines: Vec<(f64, f64)> = Vec::new();
        for (i, p) in piece.image.iter().enumerate() {
            lines.push((p.lo.a - eps - c_lo, p.lo.b));
            lines.push((p.hi.a + eps - c_hi, p.hi.b));
            for (j, q) in piece.image.iter().enumerate() {
                if i != j {
                    lines.push((p.hi.a + eps - (q.lo.a - eps), p.hi.b - q.lo.b));
                    lines.push((p.lo.a - q.lo.a, p.lo.b - q.lo.b));
                    lines.push((p.hi.a - q.hi.a, p.hi.b - q.hi.b));
                }
            }
        }
        let mut cuts: Vec<f64> = lines
            .into_iter()
            .filter(|&(_, c1)| c1 != 0.0)
            .map(|(c0, c1)| -c0 / c1)
            .filter(|t| piece.domain.contains(*t))
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        cuts
    }

    /// Lower semicontinuity. Exact at the breakpoints of piecewise-constant
    /// maps; a sampled heuristic ("evidence only") otherwise.
    pub fn check_lsc(&self, grid_n: usize, tol: f64) -> CheckResult {
        if self.is_piecewise_constant() {
            self.check_lsc_exact()
        } else {
            self.check_lsc_sampled(grid_n, tol)
        }
    }

    fn one_sided_piece(&self, x0: f64, left: bool) -> Option<&Piece> {
        self.pieces.iter().find(|p| {
            let (lo, hi) = (p.domain.lo().value, p.domain.hi().value);
            if left {
                lo < x0 && hi >= x0
            } else {
                lo <= x0 && hi > x0
            }
        })
    }

    fn check_lsc_exact(&self) -> CheckResult {
        let mut witnesses = Vec::new();
        for x0 in self.breakpoints() {
            let value = self.piece_at(x0).map(|p| p.image_at(x0)).unwrap_or_default();
            for (left, side) in [(true, "left"), (false, "right")] {
                let Some(neighbor) = self.one_sided_piece(x0, left) else { continue };
                let nearby = neighbor.image_at(x0).closure();
                if !value.is_subset(&nearby) {
                    witnesses.push(
                        Witness::new(format!("K({x0}) = {value} is not contained in cl {nearby} ({side} limit)"))
                            .at("x", x0),
                    );
                }
            }
        }
        CheckResult::new("lsc_map", true, None, witnesses)
    }

    fn lipschitz_bound(&self) -> f64 {
        self.pieces.iter().flat_map(|p| p.image.iter().flat_map(|q| [q.lo.b.abs(), q.hi.b.abs()])).fold(0.0, f64::max)
    }

    fn check_lsc_sampled(&self, grid_n: usize, tol: f64) -> CheckResult {
        let (lo, hi) = (self.ground.lo().value, self.ground.hi().value);
        let h = (hi - lo) / grid_n.max(1) as f64;
        let lip = self.lipschitz_bound();
        let mut xs: Vec<f64> = uniform_grid(lo, hi, grid_n).collect();
        xs.extend(self.breakpoints());
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let mut witnesses = Vec::new();
        for &x in &xs {
            let Ok(image) = self.eval_at(x) else { continue };
            let probes: Vec<f64> =
                image.parts().iter().flat_map(|p| [p.lo().value, p.midpoint(), p.hi().value]).collect();
            for &y in &probes {
                for sign in [-1.0, 1.0] {
                    // A genuine lsc failure keeps the gap open at every scale.
                    let persistent = (1..=5).all(|k| {
                        let delta = h / 4f64.powi(k);
                        let x2 = x + sign * delta;
                        match self.eval_at(x2) {
                            Ok(near) => near.distance(y) > lip * delta + tol,
                            Err(_) => false,
                        }
                    });
                    if persistent {
                        let gap = self.eval_at(x + sign * h / 4.0).map(|s| s.distance(y)).unwrap_or(0.0);
                        witnesses.push(
                            Witness::new("image point not approached by nearby images")
                                .at("x", x)
                                .at("y", y)
                                .at("delta", sign * h / 4.0)
                                .value("distance", gap),
                        );
                    }
                }
            }
        }
        let mut result = CheckResult::new("lsc_map", false, Some(grid_n), witnesses);
        result.notes.push("evidence only: sampled neighbourhood test for affine-endpoint images".into());
        result
    }

    /// Open lower sections: every `{x : y ∈ K(x)}` is open relative to `C`.
    /// Exact over the finitely many distinct sections of piecewise-constant
    /// maps; sampled over a `y` grid otherwise.
    pub fn check_open_lower_sections(&self, grid_n: usize) -> CheckResult {
        let (lo, hi) = (self.ground.lo().value, self.ground.hi().value);
        let exact = self.is_piecewise_constant();
        let ys: Vec<f64> = if exact {
            let mut crit: Vec<f64> = self
                .pieces
                .iter()
                .flat_map(|p| p.image.iter().flat_map(|q| [q.lo.a, q.hi.a]))
                .chain([lo, hi])
                .filter(|v| self.ground.contains(*v))
                .collect();
            crit.sort_by(f64::total_cmp);
            crit.dedup();
            let mids: Vec<f64> = crit.windows(2).map(|w| w[0] + 0.5 * (w[1] - w[0])).collect();
            crit.extend(mids);
            crit.sort_by(f64::total_cmp);
            crit
        } else {
            uniform_grid(lo, hi, grid_n).collect()
        };
        let mut witnesses = Vec::new();
        for y in ys {
            let Ok(section) = self.lower_inverse(y) else { continue };
            if !section.is_relatively_open_in(&self.ground) {
                witnesses
                    .push(Witness::new(format!("lower section {section} is not open in {}", self.ground)).at("y", y));
            }
        }
        let mut result = CheckResult::new("open_lower_sections", exact, (!exact).then_some(grid_n), witnesses);
        if !exact {
            result.notes.push("evidence only: sampled y grid for affine-endpoint images".into());
        }
        result
    }
}

fn check_partition(ground: &Interval, pieces: &[Piece]) -> Result<(), MapError> {
    let err = |m: String| Err(MapError::Partition(m));
    let (Some(first), Some(last)) = (pieces.first(), pieces.last()) else {
        return err("no pieces".into());
    };
    if first.domain.lo() != ground.lo() {
        return err(format!("first piece {} does not start at {}", first.domain, ground));
    }
    if last.domain.hi() != ground.hi() {
        return err(format!("last piece {} does not end at {}", last.domain, ground));
    }
    for w in pieces.windows(2) {
        let (a, b) = (w[0].domain.hi(), w[1].domain.lo());
        if a.value != b.value {
            return err(format!("gap or overlap between {} and {}", w[0].domain, w[1].domain));
        }
        if a.kind == b.kind {
            let what = if a.kind == Kind::Closed { "overlap" } else { "gap" };
            return err(format!("{what} at {} between {} and {}", a.value, w[0].domain, w[1].domain));
        }
    }
    Ok(())
}

fn check_image(ground: &Interval, piece: &Piece) -> Result<(), String> {
    if piece.image.is_empty() {
        return Err("empty image".into());
    }
    let d = piece.domain;
    let ends = [(d.lo().value, d.lo().kind), (d.hi().value, d.hi().kind)];
    for part in &piece.image {
        for b in [part.lo, part.hi] {
            if !(b.a.is_finite() && b.b.is_finite()) {
                return Err("non-finite image bound".into());
            }
        }
        let both_closed = part.lo.kind.is_closed() && part.hi.kind.is_closed();
        let width = |x: f64| part.hi.at(x) - part.lo.at(x);
        let (w0, w1) = (width(ends[0].0), width(ends[1].0));
        for &(x, kind) in &ends {
            let w = width(x);
            let ok = if kind.is_closed() && !both_closed { w > 0.0 } else { w >= 0.0 };
            if !ok {
                return Err(format!("image part is empty at x = {x}"));
            }
        }
        if !d.is_singleton() && !both_closed && w0 == 0.0 && w1 == 0.0 {
            return Err("image part is empty on the whole domain".into());
        }
        for x in [ends[0].0, ends[1].0] {
            if part.lo.at(x) < ground.lo().value || part.hi.at(x) > ground.hi().value {
                return Err(format!("image leaves the ground set {ground} at x = {x}"));
            }
        }
    }
    Ok(())
}

/// Splits `domain` at `cuts` (sorted, contained in `domain`): each cut
/// becomes a singleton piece and the stretches between cuts open pieces.
fn split_domain(domain: &Interval, cuts: &[f64]) -> Vec<Interval> {
    let mut out = Vec::new();
    let mut lo = domain.lo();
    for &t in cuts {
        out.extend(Interval::try_new(lo, Endpoint::open(t)));
        out.push(Interval::point(t));
        lo = Endpoint::open(t);
    }
    out.extend(Interval::try_new(lo, domain.hi()));
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(s: &str) -> IntervalSet {
        s.parse().unwrap()
    }

    fn iv(s: &str) -> Interval {
        s.parse().unwrap()
    }

    pub(crate) fn counterexample_map() -> PiecewiseMap {
        PiecewiseMap::new(
            Interval::closed(0.0, 4.0),
            vec![
                Piece::constant(iv("[0,2)"), iv("[0,4]")),
                Piece::constant(iv("[2,3]"), iv("[0,1)")),
                Piece::constant(iv("(3,4]"), iv("[0,3)")),
            ],
        )
        .unwrap()
    }

    fn constant_map() -> PiecewiseMap {
        PiecewiseMap::constant(Interval::closed(0.0, 4.0), Interval::closed(0.0, 4.0)).unwrap()
    }

    #[test]
    fn evaluation() {
        let k = counterexample_map();
        assert_eq!(k.eval_at(2.5).unwrap(), set("[0,1)"));
        assert_eq!(k.eval_at(3.5).unwrap(), set("[0,3)"));
        assert_eq!(k.eval_at(1.0).unwrap(), set("[0,4]"));
        assert_eq!(constant_map().eval_at(1.7).unwrap(), set("[0,4]"));
        assert!(matches!(k.eval_at(4.5), Err(MapError::OutsideGround { .. })));
    }

    #[test]
    fn lower_inverse_examples() {
        let k = counterexample_map();
        assert_eq!(k.lower_inverse(2.0).unwrap(), set("[0,2) ∪ (3,4]"));
        assert_eq!(k.lower_inverse(0.5).unwrap(), set("[0,4]"));
        assert_eq!(k.lower_inverse(3.5).unwrap(), set("[0,2)"));
        assert!(k.lower_inverse(-1.0).is_err());
    }

    #[test]
    fn enlargement_examples() {
        let k = counterexample_map();
        let ke = k.enlarge(0.5).unwrap();
        assert_eq!(ke.pieces().len(), 3);
        assert_eq!(ke.eval_at(2.5).unwrap(), set("[0,1.5)"));
        assert_eq!(ke.eval_at(3.5).unwrap(), set("[0,3.5)"));
        assert_eq!(ke.eval_at(1.0).unwrap(), set("[0,4]"));
        assert_eq!(constant_map().enlarge(0.7).unwrap().eval_at(3.0).unwrap(), set("[0,4]"));
        assert!(matches!(k.enlarge(0.0), Err(MapError::BadRadius(_))));
    }

    #[test]
    fn fixed_point_examples() {
        let k = counterexample_map();
        assert_eq!(k.fixed_point_set(), set("[0,2)"));
        assert_eq!(k.enlarge(0.5).unwrap().fixed_point_set(), set("[0,2) ∪ (3,3.5)"));
        assert_eq!(constant_map().fixed_point_set(), set("[0,4]"));
    }

    #[test]
    fn lsc_examples() {
        assert!(counterexample_map().check_lsc(512, 1e-6).passed);
        assert!(constant_map().check_lsc(512, 1e-6).passed);
        let bad = PiecewiseMap::new(
            Interval::closed(0.0, 4.0),
            vec![Piece::constant(iv("[0,2]"), iv("[0,4]")), Piece::constant(iv("(2,4]"), iv("[2,3]"))],
        )
        .unwrap();
        let r = bad.check_lsc(512, 1e-6);
        assert!(!r.passed && r.exact);
        assert_eq!(r.witnesses[0].at["x"], 2.0);
    }

    #[test]
    fn open_lower_section_examples() {
        let r = counterexample_map().check_open_lower_sections(512);
        assert!(r.passed && r.exact);
        assert!(constant_map().check_open_lower_sections(512).passed);
        let bad = PiecewiseMap::new(
            Interval::closed(0.0, 4.0),
            vec![
                Piece::constant(iv("[0,1)"), iv("[2,4]")),
                Piece::constant(iv("[1,2]"), iv("[0,1]")),
                Piece::constant(iv("(2,4]"), iv("[2,4]")),
            ],
        )
        .unwrap();
        assert_eq!(bad.lower_inverse(0.5).unwrap(), set("[1,2]"));
        let r = bad.check_open_lower_sections(512);
        assert!(!r.passed);
        assert!(r.witnesses.iter().any(|w| w.at["y"] == 0.5));
    }

    #[test]
    fn validation_rejects_bad_partitions() {
        let c = Interval::closed(0.0, 4.0);
        let overlap = vec![Piece::constant(iv("[0,2]"), c), Piece::constant(iv("[2,4]"), c)];
        assert!(matches!(PiecewiseMap::new(c, overlap), Err(MapError::Partition(_))));
        let gap = vec![Piece::constant(iv("[0,2)"), c), Piece::constant(iv("(2,4]"), c)];
        assert!(matches!(PiecewiseMap::new(c, gap), Err(MapError::Partition(_))));
        let short = vec![Piece::constant(iv("[0,3]"), c)];
        assert!(PiecewiseMap::new(c, short).is_err());
        let outside = vec![Piece::constant(c, iv("[0,5]"))];
        assert!(matches!(PiecewiseMap::new(c, outside), Err(MapError::InvalidImage { .. })));
        assert!(PiecewiseMap::new(iv("[0,4)"), vec![Piece::constant(iv("[0,4)"), iv("[0,1]"))]).is_err());
    }

    #[test]
    fn affine_images() {
        // K(x) = [x/2, x/2 + 1] on [0,4]: fixed points x/2 <= x <= x/2 + 1, i.e. [0,2].
        let c = Interval::closed(0.0, 4.0);
        let part = ImagePart {
            lo: AffineBound { a: 0.0, b: 0.5, kind: Kind::Closed },
            hi: AffineBound { a: 1.0, b: 0.5, kind: Kind::Closed },
        };
        let k = PiecewiseMap::new(c, vec![Piece { domain: c, image: vec![part] }]).unwrap();
        assert_eq!(k.fixed_point_set(), set("[0,2]"));
        assert_eq!(k.lower_inverse(1.0).unwrap(), set("[0,2]"));
        // Enlarging by 0.5 clips at 0 while x/2 - 0.5 < 0, i.e. on [0,1).
        let ke = k.enlarge(0.5).unwrap();
        assert_eq!(ke.eval_at(0.5).unwrap(), set("[0,1.75)"));
        assert_eq!(ke.eval_at(1.0).unwrap(), set("(0,2)"));
        assert_eq!(ke.eval_at(3.0).unwrap(), set("(1,3)"));
        assert_eq!(ke.fixed_point_set(), set("[0,3)"));
        assert!(k.check_lsc(256, 1e-6).passed);
        assert!(!k.check_lsc(256, 1e-6).exact);
    }

    #[test]
    fn enlargement_merges_parts_where_they_meet() {
        // Parts [0,1] and [x,4] on [1,4]; with eps = 0.25 they merge while x - 0.25 < 1.25.
        let c = Interval::closed(0.0, 4.0);
        let image = vec![
            ImagePart::constant(iv("[0,1]")),
            ImagePart {
                lo: AffineBound { a: 0.0, b: 1.0, kind: Kind::Closed },
                hi: AffineBound::constant(4.0, Kind::Closed),
            },
        ];
        let k = PiecewiseMap::new(c, vec![Piece { domain: iv("[1,4]"), image }, Piece::constant(iv("[0,1)"), c)]);
        let k = k.unwrap();
        assert!(!k.is_convex_valued());
        let ke = k.enlarge(0.25).unwrap();
        for x in [1.0, 1.25, 1.5, 1.75, 2.0, 2.5, 3.0, 4.0] {
            assert_eq!(ke.eval_at(x).unwrap(), k.eval_enlarged(x, 0.25).unwrap(), "x = {x}");
        }
        assert_eq!(ke.eval_at(1.25).unwrap(), set("[0,4]"));
        assert_eq!(ke.eval_at(1.5).unwrap(), set("[0,1.25) ∪ (1.25,4]"));
        assert_eq!(ke.eval_at(2.5).unwrap(), set("[0,1.25) ∪ (2.25,4]"));
    }

    // Random maps on C = [0,4] with data on the 1/4 lattice.
    pub(crate) fn arb_map(affine: bool) -> impl Strategy<Value = PiecewiseMap> {
        let cuts = prop::collection::btree_set(1u32..16, 0..4);
        let piece_data = prop::collection::vec(
            (0u32..17, 0u32..17, any::<bool>(), any::<bool>(), -1i32..=1, -1i32..=1, any::<bool>()),
            5,
        );
        (cuts, piece_data).prop_filter_map("invalid map", move |(cuts, data)| {
            let c = Interval::closed(0.0, 4.0);
            let cuts: Vec<f64> = cuts.into_iter().map(|k| k as f64 * 0.25).collect();
            let mut domains = Vec::new();
            let mut lo = Endpoint::closed(0.0);
            for (i, &t) in cuts.iter().enumerate() {
                let closed_left = data[i].6;
                let hi = Endpoint { value: t, kind: if closed_left { Kind::Closed } else { Kind::Open } };
                domains.push(Interval::try_new(lo, hi)?);
                lo = Endpoint { value: t, kind: hi.kind.flip() };
            }
            domains.push(Interval::try_new(lo, Endpoint::closed(4.0))?);
            let pieces = domains
                .into_iter()
                .zip(&data)
                .map(|(domain, &(a, b, lc, hc, sl, sh, _))| {
                    let (a, b) = (a.min(b) as f64 * 0.25, a.max(b) as f64 * 0.25);
                    let k = |c: bool| if c { Kind::Closed } else { Kind::Open };
                    let (sl, sh) = if affine { (sl as f64 * 0.5, sh as f64 * 0.5) } else { (0.0, 0.0) };
                    // Anchor the slopes at the domain midpoint so the bounds stay near [a, b].
                    let m = domain.midpoint();
                    Piece {
                        domain,
                        image: vec![ImagePart {
                            lo: AffineBound { a: a - sl * m, b: sl, kind: k(lc) },
                            hi: AffineBound { a: b - sh * m, b: sh, kind: k(hc) },
                        }],
                    }
                })
                .collect();
            PiecewiseMap::new(c, pieces).ok()
        })
    }

    fn lattice_point() -> impl Strategy<Value = f64> {
        prop_oneof![(0u32..=64).prop_map(|k| k as f64 / 16.0), 0.0f64..=4.0]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn graph_consistency(k in arb_map(false), x in lattice_point(), y in lattice_point()) {
            prop_assert_eq!(k.eval_at(x).unwrap().contains(y), k.lower_inverse(y).unwrap().contains(x));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn graph_consistency_affine(k in arb_map(true), x in lattice_point(), y in lattice_point()) {
            prop_assert_eq!(k.eval_at(x).unwrap().contains(y), k.lower_inverse(y).unwrap().contains(x));
        }

        #[test]
        fn enlargement_is_monotone(k in arb_map(true), e1 in 1u32..8, de in 1u32..8, x in lattice_point()) {
            let (e1, e2) = (e1 as f64 / 8.0, (e1 + de) as f64 / 8.0);
            let base = k.eval_at(x).unwrap();
            let small = k.enlarge(e1).unwrap().eval_at(x).unwrap();
            let large = k.enlarge(e2).unwrap().eval_at(x).unwrap();
            prop_assert!(base.is_subset(&small));
            prop_assert!(small.is_subset(&large));
        }

        #[test]
        fn piecewise_enlargement_matches_pointwise(k in arb_map(true), e in 1u32..16, x in 0u32..=256) {
            // Lattice points keep both evaluation orders exact.
            let (eps, x) = (e as f64 / 8.0, x as f64 / 64.0);
            prop_assert_eq!(k.enlarge(eps).unwrap().eval_at(x).unwrap(), k.eval_enlarged(x, eps).unwrap());
        }

        #[test]
        fn fixed_points_grow_under_enlargement(k in arb_map(true), e in 1u32..16) {
            let fix = k.fixed_point_set();
            let fix_e = k.enlarge(e as f64 / 8.0).unwrap().fixed_point_set();
            prop_assert!(fix.is_subset(&fix_e), "{} not in {}", fix, fix_e);
        }

        #[test]
        fn enlarged_lsc_maps_have_open_lower_sections(k in arb_map(false), e in 1u32..16) {
            prop_assume!(k.check_lsc(64, 1e-6).passed);
            let ke = k.enlarge(e as f64 / 8.0).unwrap();
            let r = ke.check_open_lower_sections(64);
            prop_assert!(r.passed, "{:?}", r.witnesses);
        }
    }

    #[test]
    fn fixed_point_set_matches_grid_oracle() {
        use proptest::strategy::ValueTree;
        use proptest::test_runner::TestRunner;
        let mut runner = TestRunner::deterministic();
        for affine in [false, true] {
            for _ in 0..50 {
                let k = arb_map(affine).new_tree(&mut runner).unwrap().current();
                let fix = k.fixed_point_set();
                for x in uniform_grid(0.0, 4.0, 10_000) {
                    let oracle = k.eval_at(x).unwrap().contains(x);
                    assert_eq!(fix.contains(x), oracle, "x = {x}, fix = {fix}");
                }
            }
        }
    }
}
