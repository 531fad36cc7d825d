//! Exact algebra of finite unions of real intervals.
//!
//! Every endpoint carries its own open/closed flag, and all operations are
//! exact on the stored `f64` values: there is no tolerance anywhere in this
//! module. An [`IntervalSet`] is always kept normalized: parts are sorted,
//! pairwise disjoint, and no two parts could be merged into one interval.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntervalError {
    #[error("endpoint value {0} is not finite")]
    NonFinite(f64),
    #[error("interval with endpoints {lo} and {hi} is empty")]
    Empty { lo: String, hi: String },
    #[error("ball radius must be positive and finite, got {0}")]
    BadRadius(f64),
    #[error("extremum of the empty set")]
    EmptySet,
    #[error("cannot parse interval set: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Open,
    Closed,
}

impl Kind {
    pub fn flip(self) -> Kind {
        match self {
            Kind::Open => Kind::Closed,
            Kind::Closed => Kind::Open,
        }
    }

    pub fn is_closed(self) -> bool {
        self == Kind::Closed
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Endpoint {
    pub value: f64,
    pub kind: Kind,
}

impl Endpoint {
    pub fn open(value: f64) -> Self {
        Endpoint { value, kind: Kind::Open }
    }

    pub fn closed(value: f64) -> Self {
        Endpoint { value, kind: Kind::Closed }
    }
}

/// Orders endpoints used as lower bounds: a closed bound starts before an
/// open one at the same value.
pub(crate) fn cmp_lower(a: &Endpoint, b: &Endpoint) -> Ordering {
    a.value.total_cmp(&b.value).then_with(|| match (a.kind, b.kind) {
        (Kind::Closed, Kind::Open) => Ordering::Less,
        (Kind::Open, Kind::Closed) => Ordering::Greater,
        _ => Ordering::Equal,
    })
}

/// Orders endpoints used as upper bounds: an open bound ends before a closed
/// one at the same value.
pub(crate) fn cmp_upper(a: &Endpoint, b: &Endpoint) -> Ordering {
    a.value.total_cmp(&b.value).then_with(|| match (a.kind, b.kind) {
        (Kind::Open, Kind::Closed) => Ordering::Less,
        (Kind::Closed, Kind::Open) => Ordering::Greater,
        _ => Ordering::Equal,
    })
}

/// A nonempty real interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    lo: Endpoint,
    hi: Endpoint,
}

impl Interval {
    pub fn new(lo: Endpoint, hi: Endpoint) -> Result<Self, IntervalError> {
        for v in [lo.value, hi.value] {
            if !v.is_finite() {
                return Err(IntervalError::NonFinite(v));
            }
        }
        Self::try_new(lo, hi).ok_or_else(|| IntervalError::Empty {
            lo: format!("{}{}", if lo.kind.is_closed() { '[' } else { '(' }, lo.value),
            hi: format!("{}{}", hi.value, if hi.kind.is_closed() { ']' } else { ')' }),
        })
    }

    /// Returns `None` when the endpoints describe an empty set.
    pub fn try_new(lo: Endpoint, hi: Endpoint) -> Option<Self> {
        if !(lo.value.is_finite() && hi.value.is_finite()) {
            return None;
        }
        let valid = lo.value < hi.value || (lo.value == hi.value && lo.kind.is_closed() && hi.kind.is_closed());
        valid.then_some(Interval { lo, hi })
    }

    fn expect_new(lo: Endpoint, hi: Endpoint) -> Self {
        match Self::new(lo, hi) {
            Ok(iv) => iv,
            Err(e) => panic!("invalid interval: {e}"),
        }
    }

    /// `[a, b]`. Panics if the interval would be empty.
    pub fn closed(a: f64, b: f64) -> Self {
        Self::expect_new(Endpoint::closed(a), Endpoint::closed(b))
    }

    /// `(a, b)`. Panics if the interval would be empty.
    pub fn open(a: f64, b: f64) -> Self {
        Self::expect_new(Endpoint::open(a), Endpoint::open(b))
    }

    /// `[a, b)`. Panics if the interval would be empty.
    pub fn closed_open(a: f64, b: f64) -> Self {
        Self::expect_new(Endpoint::closed(a), Endpoint::open(b))
    }

    /// `(a, b]`. Panics if the interval would be empty.
    pub fn open_closed(a: f64, b: f64) -> Self {
        Self::expect_new(Endpoint::open(a), Endpoint::closed(b))
    }

    pub fn point(a: f64) -> Self {
        Self::closed(a, a)
    }

    pub fn lo(&self) -> Endpoint {
        self.lo
    }

    pub fn hi(&self) -> Endpoint {
        self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi.value - self.lo.value
    }

    pub fn midpoint(&self) -> f64 {
        self.lo.value + 0.5 * (self.hi.value - self.lo.value)
    }

    pub fn is_singleton(&self) -> bool {
        self.lo.value == self.hi.value
    }

    pub fn is_closed(&self) -> bool {
        self.lo.kind.is_closed() && self.hi.kind.is_closed()
    }

    pub fn contains(&self, t: f64) -> bool {
        let above = match self.lo.kind {
            Kind::Closed => t >= self.lo.value,
            Kind::Open => t > self.lo.value,
        };
        let below = match self.hi.kind {
            Kind::Closed => t <= self.hi.value,
            Kind::Open => t < self.hi.value,
        };
        above && below
    }

    pub fn closure(&self) -> Interval {
        Interval { lo: Endpoint::closed(self.lo.value), hi: Endpoint::closed(self.hi.value) }
    }

    pub fn distance(&self, t: f64) -> f64 {
        if t < self.lo.value {
            self.lo.value - t
        } else if t > self.hi.value {
            t - self.hi.value
        } else {
            0.0
        }
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = if cmp_lower(&self.lo, &other.lo) == Ordering::Less { other.lo } else { self.lo };
        let hi = if cmp_upper(&self.hi, &other.hi) == Ordering::Greater { other.hi } else { self.hi };
        Interval::try_new(lo, hi)
    }

    /// Keeps the points `t` with `t >= bound` (or `t > bound` when `kind` is open).
    pub fn clip_below(&self, bound: f64, kind: Kind) -> Option<Interval> {
        let lo = Endpoint { value: bound, kind };
        let lo = if cmp_lower(&lo, &self.lo) == Ordering::Greater { lo } else { self.lo };
        Interval::try_new(lo, self.hi)
    }

    /// Keeps the points `t` with `t <= bound` (or `t < bound` when `kind` is open).
    pub fn clip_above(&self, bound: f64, kind: Kind) -> Option<Interval> {
        let hi = Endpoint { value: bound, kind };
        let hi = if cmp_upper(&hi, &self.hi) == Ordering::Less { hi } else { self.hi };
        Interval::try_new(self.lo, hi)
    }

    /// `{t ∈ self : c0 + c1·t <= 0}`, or `< 0` when `strict`.
    pub fn solve_affine(&self, c0: f64, c1: f64, strict: bool) -> Option<Interval> {
        let kind = if strict { Kind::Open } else { Kind::Closed };
        if c1 == 0.0 {
            let holds = if strict { c0 < 0.0 } else { c0 <= 0.0 };
            return holds.then_some(*self);
        }
        let root = -c0 / c1;
        if c1 > 0.0 {
            self.clip_above(root, kind)
        } else {
            self.clip_below(root, kind)
        }
    }

    /// Whether `self` followed by `next` (with `next` starting no earlier)
    /// can be fused into a single interval.
    pub(crate) fn merges_with(&self, next: &Interval) -> bool {
        next.lo.value < self.hi.value
            || (next.lo.value == self.hi.value && (self.hi.kind.is_closed() || next.lo.kind.is_closed()))
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let open = if self.lo.kind.is_closed() { '[' } else { '(' };
        let close = if self.hi.kind.is_closed() { ']' } else { ')' };
        write!(f, "{open}{},{}{close}", self.lo.value, self.hi.value)
    }
}

/// Which extremum to extract from a set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Sup,
    Inf,
}

/// A finite union of disjoint, non-adjacent intervals. The empty list is ∅.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntervalSet {
    parts: Vec<Interval>,
}

impl From<Interval> for IntervalSet {
    fn from(iv: Interval) -> Self {
        IntervalSet { parts: vec![iv] }
    }
}

impl FromIterator<Interval> for IntervalSet {
    fn from_iter<I: IntoIterator<Item = Interval>>(iter: I) -> Self {
        Self::from_parts(iter.into_iter().collect())
    }
}

impl IntervalSet {
    pub fn empty() -> Self {
        IntervalSet { parts: Vec::new() }
    }

    /// Builds a normalized set from arbitrary (possibly overlapping) parts.
    pub fn from_parts(mut parts: Vec<Interval>) -> Self {
        parts.sort_by(|a, b| cmp_lower(&a.lo, &b.lo));
        let mut out: Vec<Interval> = Vec::with_capacity(parts.len());
        for p in parts {
            match out.last_mut() {
                Some(cur) if cur.merges_with(&p) => {
                    if cmp_upper(&p.hi, &cur.hi) == Ordering::Greater {
                        cur.hi = p.hi;
                    }
                }
                _ => out.push(p),
            }
        }
        IntervalSet { parts: out }
    }

    pub fn parts(&self) -> &[Interval] {
        &self.parts
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.parts.windows(2).all(|w| !w[0].merges_with(&w[1]) && w[0].hi.value <= w[1].lo.value)
    }

    pub fn union(&self, other: &IntervalSet) -> IntervalSet {
        let mut parts = self.parts.clone();
        parts.extend_from_slice(&other.parts);
        Self::from_parts(parts)
    }

    pub fn intersect(&self, other: &IntervalSet) -> IntervalSet {
        let mut parts = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.parts.len() && j < other.parts.len() {
            let (a, b) = (&self.parts[i], &other.parts[j]);
            if let Some(iv) = a.intersect(b) {
                parts.push(iv);
            }
            if cmp_upper(&a.hi, &b.hi) == Ordering::Less {
                i += 1;
            } else {
                j += 1;
            }
        }
        Self::from_parts(parts)
    }

    pub fn intersect_interval(&self, iv: &Interval) -> IntervalSet {
        self.intersect(&IntervalSet::from(*iv))
    }

    /// `A + (-eps, eps)`: every part widens by `eps` on both sides and opens.
    pub fn minkowski_open_ball(&self, eps: f64) -> Result<IntervalSet, IntervalError> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(IntervalError::BadRadius(eps));
        }
        Ok(Self::from_parts(
            self.parts
                .iter()
                .filter_map(|p| Interval::try_new(Endpoint::open(p.lo.value - eps), Endpoint::open(p.hi.value + eps)))
                .collect(),
        ))
    }

    pub fn closure(&self) -> IntervalSet {
        Self::from_parts(self.parts.iter().map(Interval::closure).collect())
    }

    pub fn contains(&self, t: f64) -> bool {
        // First part whose upper end is not below t.
        let idx = self.parts.partition_point(|p| p.hi.value < t);
        self.parts[idx..].iter().take(2).any(|p| p.contains(t))
    }

    /// Distance from `t` to the set; `f64::INFINITY` for ∅.
    pub fn distance(&self, t: f64) -> f64 {
        self.parts.iter().map(|p| p.distance(t)).fold(f64::INFINITY, f64::min)
    }

    /// Supremum or infimum, with `attained` set when the extreme endpoint is closed.
    pub fn extremum(&self, side: Side) -> Result<(f64, bool), IntervalError> {
        let e = match side {
            Side::Sup => self.parts.last().map(|p| p.hi),
            Side::Inf => self.parts.first().map(|p| p.lo),
        }
        .ok_or(IntervalError::EmptySet)?;
        Ok((e.value, e.kind.is_closed()))
    }

    /// The smallest closed interval containing the set.
    pub fn hull(&self) -> Option<Interval> {
        let (first, last) = (self.parts.first()?, self.parts.last()?);
        Some(Interval::closed(first.lo.value, last.hi.value))
    }

    /// `ground ∖ self`.
    pub fn complement_in(&self, ground: &Interval) -> IntervalSet {
        let clipped = self.intersect_interval(ground);
        let mut out = Vec::new();
        let mut cursor = ground.lo;
        for p in &clipped.parts {
            let hi = Endpoint { value: p.lo.value, kind: p.lo.kind.flip() };
            if let Some(gap) = Interval::try_new(cursor, hi) {
                out.push(gap);
            }
            cursor = Endpoint { value: p.hi.value, kind: p.hi.kind.flip() };
        }
        if let Some(gap) = Interval::try_new(cursor, ground.hi) {
            out.push(gap);
        }
        IntervalSet { parts: out }
    }

    /// `self ∖ other`.
    pub fn difference(&self, other: &IntervalSet) -> IntervalSet {
        match self.hull() {
            None => IntervalSet::empty(),
            Some(h) => self.intersect(&other.complement_in(&h)),
        }
    }

    pub fn is_subset(&self, other: &IntervalSet) -> bool {
        self.difference(other).is_empty()
    }

    /// Whether the set is open in the relative topology of `ground`
    /// (which it must be contained in).
    pub fn is_relatively_open_in(&self, ground: &Interval) -> bool {
        self.parts.iter().all(|p| {
            let lo_ok = !p.lo.kind.is_closed() || p.lo.value == ground.lo.value;
            let hi_ok = !p.hi.kind.is_closed() || p.hi.value == ground.hi.value;
            lo_ok && hi_ok
        })
    }

    pub fn is_closed(&self) -> bool {
        self.parts.iter().all(Interval::is_closed)
    }

    /// Total length (Lebesgue measure).
    pub fn measure(&self) -> f64 {
        self.parts.iter().map(Interval::length).sum()
    }

    /// The part with the largest length; the first one on ties.
    pub fn largest_part(&self) -> Option<&Interval> {
        self.parts.iter().fold(None, |best: Option<&Interval>, p| match best {
            Some(b) if b.length() >= p.length() => Some(b),
            _ => Some(p),
        })
    }

    /// A point of the set, preferring its smallest element when it exists.
    pub fn representative(&self) -> Option<f64> {
        let p = self.parts.first()?;
        Some(if p.lo.kind.is_closed() { p.lo.value } else { p.midpoint() })
    }
}

impl fmt::Display for IntervalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.parts.is_empty() {
            return write!(f, "∅");
        }
        for (i, p) in self.parts.iter().enumerate() {
            if i > 0 {
                write!(f, " ∪ ")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

impl FromStr for Interval {
    type Err = IntervalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || IntervalError::Parse(s.to_string());
        let mut chars = s.chars();
        let lo_kind = match chars.next() {
            Some('[') => Kind::Closed,
            Some('(') => Kind::Open,
            _ => return Err(bad()),
        };
        let hi_kind = match chars.next_back() {
            Some(']') => Kind::Closed,
            Some(')') => Kind::Open,
            _ => return Err(bad()),
        };
        let (a, b) = chars.as_str().split_once(',').ok_or_else(bad)?;
        let a: f64 = a.trim().parse().map_err(|_| bad())?;
        let b: f64 = b.trim().parse().map_err(|_| bad())?;
        Interval::new(Endpoint { value: a, kind: lo_kind }, Endpoint { value: b, kind: hi_kind })
    }
}

impl FromStr for IntervalSet {
    type Err = IntervalError;

    /// Parses the report notation, e.g. `[0,2) ∪ (3,3.5)` or `∅`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "∅" || s.is_empty() {
            return Ok(IntervalSet::empty());
        }
        s.split('∪').map(str::parse).collect::<Result<Vec<Interval>, _>>().map(Self::from_parts)
    }
}

impl Serialize for IntervalSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for IntervalSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Serialize for Interval {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}
