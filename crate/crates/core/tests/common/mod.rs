//! Random dyadic scenarios and brute-force oracles that never call the
//! library's own set algebra or solvers.
#![allow(dead_code)]

use qep_core::{Endpoint, Interval, Piece, PiecewiseMap, Scenario};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LO: f64 = 0.0;
pub const HI: f64 = 4.0;
/// Points of the brute-force x grid (spacing 2^-15 on [0,4]).
pub const ORACLE_N: usize = 1 << 17;
/// Every set boundary produced by the generators lies on this lattice.
pub const COARSE: f64 = 1.0 / 16.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Iv {
    pub lo: f64,
    pub hi: f64,
    pub lo_open: bool,
    pub hi_open: bool,
}

impl Iv {
    pub fn closed(lo: f64, hi: f64) -> Iv {
        Iv { lo, hi, lo_open: false, hi_open: false }
    }

    pub fn contains(&self, t: f64) -> bool {
        let above = if self.lo_open { t > self.lo } else { t >= self.lo };
        let below = if self.hi_open { t < self.hi } else { t <= self.hi };
        above && below
    }

    pub fn closure(&self) -> Iv {
        Iv::closed(self.lo, self.hi)
    }

    /// Nonempty intersection, if any.
    pub fn meet(&self, o: &Iv) -> Option<Iv> {
        let (lo, lo_open) = match self.lo.total_cmp(&o.lo) {
            std::cmp::Ordering::Less => (o.lo, o.lo_open),
            std::cmp::Ordering::Greater => (self.lo, self.lo_open),
            std::cmp::Ordering::Equal => (self.lo, self.lo_open || o.lo_open),
        };
        let (hi, hi_open) = match self.hi.total_cmp(&o.hi) {
            std::cmp::Ordering::Less => (self.hi, self.hi_open),
            std::cmp::Ordering::Greater => (o.hi, o.hi_open),
            std::cmp::Ordering::Equal => (self.hi, self.hi_open || o.hi_open),
        };
        let ok = lo < hi || (lo == hi && !lo_open && !hi_open);
        ok.then_some(Iv { lo, hi, lo_open, hi_open })
    }

    pub fn subset_of(&self, o: &Iv) -> bool {
        let lo_ok = self.lo > o.lo || (self.lo == o.lo && (!o.lo_open || self.lo_open));
        let hi_ok = self.hi < o.hi || (self.hi == o.hi && (!o.hi_open || self.hi_open));
        lo_ok && hi_ok
    }

    pub fn to_interval(self) -> Interval {
        let ep = |v: f64, open: bool| if open { Endpoint::open(v) } else { Endpoint::closed(v) };
        Interval::new(ep(self.lo, self.lo_open), ep(self.hi, self.hi_open)).expect("valid oracle interval")
    }
}

/// A piecewise-constant map on [0,4] kept in plain form for the oracles.
#[derive(Debug, Clone)]
pub struct RawMap {
    pub pieces: Vec<(Iv, Iv)>,
}

impl RawMap {
    pub fn image(&self, x: f64) -> Iv {
        self.pieces.iter().find(|(d, _)| d.contains(x)).map(|p| p.1).expect("partition covers [0,4]")
    }

    pub fn piece_index(&self, x: f64) -> usize {
        self.pieces.iter().position(|(d, _)| d.contains(x)).expect("partition covers [0,4]")
    }

    pub fn to_map(&self) -> PiecewiseMap {
        let pieces = self.pieces.iter().map(|(d, i)| Piece::constant(d.to_interval(), i.to_interval())).collect();
        PiecewiseMap::new(Interval::closed(LO, HI), pieces).expect("generated map is valid")
    }

    /// `cl K_ε(x) = [max(0, a-ε), min(4, b+ε)]`.
    pub fn enlarged_closure(&self, x: f64, eps: f64) -> Iv {
        let k = self.image(x);
        Iv::closed((k.lo - eps).max(LO), (k.hi + eps).min(HI))
    }

    pub fn is_fixed(&self, x: f64) -> bool {
        self.image(x).contains(x)
    }

    pub fn is_fixed_enlarged(&self, x: f64, eps: f64) -> bool {
        let k = self.image(x);
        k.lo - eps < x && x < k.hi + eps
    }

    /// Breakpoint condition for lower semicontinuity: `K(b)` lies in the
    /// closure of the images on both sides.
    pub fn is_lsc(&self) -> bool {
        self.breakpoint_images().iter().all(|(at, near)| near.iter().all(|n| at.subset_of(&n.closure())))
    }

    /// Open lower sections: `K(b)` lies in the images on both sides.
    pub fn has_open_lower_sections(&self) -> bool {
        self.breakpoint_images().iter().all(|(at, near)| near.iter().all(|n| at.subset_of(n)))
    }

    fn breakpoint_images(&self) -> Vec<(Iv, Vec<Iv>)> {
        let mut bs: Vec<f64> =
            self.pieces.iter().flat_map(|(d, _)| [d.lo, d.hi]).filter(|&b| b > LO && b < HI).collect();
        bs.sort_by(f64::total_cmp);
        bs.dedup();
        let h = 1.0 / 1024.0;
        bs.into_iter().map(|b| (self.image(b), vec![self.image(b - h), self.image(b + h)])).collect()
    }
}

/// `f(x,y) = p·y + q·x + r`.
#[derive(Debug, Clone, Copy)]
pub struct Affine {
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

impl Affine {
    pub fn source(&self) -> String {
        format!("{} * y + {} * x + {}", self.p, self.q, self.r)
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.p * y + self.q * x + self.r
    }

    /// Sup over the closure of `img`: attained at an endpoint.
    pub fn sup(&self, x: f64, img: &Iv) -> f64 {
        self.eval(x, img.lo).max(self.eval(x, img.hi))
    }

    pub fn inf(&self, x: f64, img: &Iv) -> f64 {
        self.eval(x, img.lo).min(self.eval(x, img.hi))
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn lattice(rng: &mut ChaCha8Rng, lo: f64, hi: f64, step: f64) -> f64 {
    let n = ((hi - lo) / step).round() as i64;
    lo + step * rng.gen_range(0..=n) as f64
}

pub fn random_image(rng: &mut ChaCha8Rng) -> Iv {
    loop {
        let a = lattice(rng, LO, HI, 0.25);
        let b = lattice(rng, LO, HI, 0.25);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let lo_open = lo < hi && lo > LO && rng.gen_bool(0.3);
        let hi_open = lo < hi && hi < HI && rng.gen_bool(0.3);
        if hi - lo <= 3.0 || rng.gen_bool(0.3) {
            return Iv { lo, hi, lo_open, hi_open };
        }
    }
}

/// Random closed sub-interval of `within` with endpoints on the 1/8 lattice.
fn sub_image(rng: &mut ChaCha8Rng, within: &Iv) -> Option<Iv> {
    let pts: Vec<f64> = (0..=32).map(|k| k as f64 / 8.0).filter(|&t| within.contains(t)).collect();
    let a = *pts.choose(rng)?;
    let b = *pts.choose(rng)?;
    Some(Iv::closed(a.min(b), a.max(b)))
}

/// Piecewise-constant map with breakpoints on the 1/4 lattice. Each
/// breakpoint is a singleton piece or attached to one side; `open_sections`
/// tightens the breakpoint rule from closures to the images themselves.
pub fn random_map(rng: &mut ChaCha8Rng, open_sections: bool) -> RawMap {
    'outer: loop {
        let k = rng.gen_range(1..=4);
        let mut bs: Vec<f64> = (0..k).map(|_| lattice(rng, 0.25, 3.75, 0.25)).collect();
        bs.sort_by(f64::total_cmp);
        bs.dedup();
        let mut cells: Vec<Iv> = Vec::new();
        let mut prev = Iv::closed(0.0, 4.0);
        for i in 0..=bs.len() {
            let mut img = random_image(rng);
            let mut tries = 0;
            while i > 0 && prev.meet(&img).is_none() {
                img = random_image(rng);
                tries += 1;
                if tries > 100 {
                    continue 'outer;
                }
            }
            cells.push(img);
            prev = img;
        }
        let mut pieces: Vec<(Iv, Iv)> = Vec::new();
        let mut dom_lo = (LO, false);
        for (i, &b) in bs.iter().enumerate() {
            let (l, r) = (cells[i], cells[i + 1]);
            let as_near = |v: &Iv| if open_sections { *v } else { v.closure() };
            let left_ok = l.subset_of(&as_near(&r));
            let right_ok = r.subset_of(&as_near(&l));
            let choice = rng.gen_range(0..3);
            if choice == 0 && left_ok {
                pieces.push((Iv { lo: dom_lo.0, hi: b, lo_open: dom_lo.1, hi_open: false }, l));
                dom_lo = (b, true);
            } else if choice == 1 && right_ok {
                pieces.push((Iv { lo: dom_lo.0, hi: b, lo_open: dom_lo.1, hi_open: true }, l));
                dom_lo = (b, false);
            } else {
                let meet = as_near(&l).meet(&as_near(&r)).expect("neighbouring images overlap");
                let Some(at) = sub_image(rng, &meet) else { continue 'outer };
                pieces.push((Iv { lo: dom_lo.0, hi: b, lo_open: dom_lo.1, hi_open: true }, l));
                pieces.push((Iv::closed(b, b), at));
                dom_lo = (b, true);
            }
        }
        pieces.push((Iv { lo: dom_lo.0, hi: HI, lo_open: dom_lo.1, hi_open: false }, cells[bs.len()]));
        return RawMap { pieces };
    }
}

pub fn random_affine(rng: &mut ChaCha8Rng) -> Affine {
    let p = *[-1.0, -0.5, 0.5, 1.0, 2.0].choose(rng).unwrap();
    let q = *[-1.0, -0.5, 0.0, 0.5, 1.0].choose(rng).unwrap();
    let r = lattice(rng, -2.0, 2.0, 0.125);
    Affine { p, q, r }
}

pub fn scenario(name: &str, map: &RawMap, f: &Affine) -> Scenario {
    Scenario::new(name, map.to_map(), &f.source(), 1.0).expect("generated scenario is valid")
}

pub fn grid_point(i: usize) -> f64 {
    if i == ORACLE_N {
        HI
    } else {
        LO + (HI - LO) * i as f64 / ORACLE_N as f64
    }
}

/// Brute-force outcome for `inf_{x∈S} sup_y f(x,y)`.
#[derive(Debug, Clone, Copy)]
pub struct OracleResult {
    /// Infimum including limits at open ends of `S`; `None` if `S` is empty.
    pub inf: Option<f64>,
    /// Some point of `S` has `sup ≤ level`.
    pub solvable: bool,
}

/// Sweeps the 2^17-point grid. `member(x)` decides `x ∈ S`; `sup(x)` is the
/// sup at `x`. With `closed`, boundary points of `S` count as members;
/// otherwise they contribute the limit of `sup` from the member side.
pub fn sweep(
    member: impl Fn(f64) -> bool,
    sup: impl Fn(f64) -> f64,
    limit: impl Fn(f64, f64) -> f64,
    closed: bool,
    level: f64,
) -> OracleResult {
    let inside: Vec<bool> = (0..=ORACLE_N).map(|i| member(grid_point(i))).collect();
    let mut inf: Option<f64> = None;
    let mut solvable = false;
    let mut take = |v: f64, counts: bool| {
        inf = Some(inf.map_or(v, |b: f64| b.min(v)));
        if counts && v <= level + 1e-12 {
            solvable = true;
        }
    };
    for i in 0..=ORACLE_N {
        let x = grid_point(i);
        if inside[i] {
            take(sup(x), true);
            continue;
        }
        let on_lattice = (x / COARSE).fract() == 0.0;
        if !on_lattice {
            continue;
        }
        for j in [i.wrapping_sub(1), i + 1] {
            if j <= ORACLE_N && inside[j] {
                if closed {
                    take(sup(x), true);
                } else {
                    take(limit(grid_point(j), x), false);
                }
            }
        }
    }
    OracleResult { inf, solvable }
}

/// Oracle for the problems on `fix K` at `level`.
pub fn fix_oracle(map: &RawMap, f: &Affine, level: f64) -> OracleResult {
    sweep(|x| map.is_fixed(x), |x| f.sup(x, &map.image(x)), |from, x| f.sup(x, &map.image(from)), false, level)
}

/// Oracle for the approximate problem on `cl fix K_ε`.
pub fn approx_oracle(map: &RawMap, f: &Affine, eps: f64) -> OracleResult {
    sweep(
        |x| map.is_fixed_enlarged(x, eps),
        |x| f.sup(x, &map.enlarged_closure(x, eps)),
        |_, _| unreachable!(),
        true,
        0.0,
    )
}

/// `x ∈ cl S` for a set whose boundary lies on the 1/16 lattice, given a
/// point on the 1/128 lattice.
pub fn in_closure(member: impl Fn(f64) -> bool, x: f64) -> bool {
    let d = 1.0 / (1 << 20) as f64;
    member(x) || (x - d >= LO && member(x - d)) || (x + d <= HI && member(x + d))
}

/// Brute-force `inf_y f` over a closed interval on a dense y grid.
pub fn brute_inf(f: impl Fn(f64) -> f64, img: &Iv, n: usize) -> f64 {
    (0..=n).map(|k| f(img.lo + (img.hi - img.lo) * k as f64 / n as f64)).fold(f64::INFINITY, f64::min)
}
