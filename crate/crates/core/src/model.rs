//! Scenarios (`C`, `K`, `f`, `ε₀`), scenario files, and the sampled
//! hypothesis checks on the bifunction.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Bifunction, Expr, ExprError};
use crate::intervals::{Endpoint, Interval, Kind};
use crate::setmap::{AffineBound, ImagePart, MapError, Piece, PiecewiseMap};
use crate::uniform_grid;

/// Most witnesses kept per check; the total count is still reported.
const WITNESS_CAP: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub strict: f64,
    pub lsc: f64,
    pub cert: f64,
    pub root: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { strict: 1e-9, lsc: 1e-6, cert: 1e-9, root: 1e-10 }
    }
}

/// A failure location with the values that make it a failure.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Witness {
    pub at: BTreeMap<String, f64>,
    pub values: BTreeMap<String, f64>,
    pub detail: String,
}

impl Witness {
    pub fn new(detail: impl Into<String>) -> Self {
        Witness { detail: detail.into(), ..Default::default() }
    }

    pub fn at(mut self, name: &str, v: f64) -> Self {
        self.at.insert(name.to_string(), v);
        self
    }

    pub fn value(mut self, name: &str, v: f64) -> Self {
        self.values.insert(name.to_string(), v);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub exact: bool,
    pub grid_used: Option<usize>,
    pub violations: usize,
    pub witnesses: Vec<Witness>,
    pub notes: Vec<String>,
}

impl CheckResult {
    /// Passes iff there are no witnesses. Keeps at most a fixed number of them.
    pub fn new(name: &str, exact: bool, grid_used: Option<usize>, mut witnesses: Vec<Witness>) -> Self {
        let violations = witnesses.len();
        witnesses.truncate(WITNESS_CAP);
        CheckResult {
            name: name.to_string(),
            passed: violations == 0,
            exact,
            grid_used,
            violations,
            witnesses,
            notes: Vec::new(),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("JSON error at line {line}, column {column}: {message}")]
    Json { line: usize, column: usize, message: String },
    #[error("in {field}: {source}")]
    Expr { field: String, source: ExprError },
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("bifunction is not finite at (x, y) = ({x}, {y})")]
    NotFinite { x: f64, y: f64 },
}

/// A quasiequilibrium instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    name: String,
    map: PiecewiseMap,
    f: Expr,
    f_src: String,
    eps0: f64,
}

const COUNTEREXAMPLE: &str = include_str!("../scenarios/counterexample.json");
const CLOSING_EXAMPLE: &str = include_str!("../scenarios/closing_example.json");

impl Scenario {
    pub fn new(name: impl Into<String>, map: PiecewiseMap, f: &str, eps0: f64) -> Result<Self, ScenarioError> {
        let f_expr = Expr::parse(f, &["x", "y"]).map_err(|source| ScenarioError::Expr { field: "f".into(), source })?;
        if !(eps0 > 0.0 && eps0.is_finite()) {
            return Err(ScenarioError::Invalid(format!("eps0 must be positive and finite, got {eps0}")));
        }
        let s = Scenario { name: name.into(), map, f: f_expr, f_src: f.to_string(), eps0 };
        if s.f.has_division() {
            s.check_finite()?;
        }
        Ok(s)
    }

    /// The counterexample: `C = [0,4]`, `f = y - x`, `K = [0,4]` on `[0,2)`, `[0,1)` on
    /// `[2,3]`, `[0,3)` on `(3,4]`.
    pub fn counterexample() -> Scenario {
        Scenario::from_json_str(COUNTEREXAMPLE).expect("bundled scenario is valid")
    }

    pub fn closing_example() -> Scenario {
        Scenario::from_json_str(CLOSING_EXAMPLE).expect("bundled scenario is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Scenario::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<Scenario, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| ScenarioError::Json {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        file.build()
    }

    pub fn to_json_string(&self) -> String {
        let file = ScenarioFile::from_scenario(self);
        serde_json::to_string_pretty(&file).expect("scenario serializes")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn ground(&self) -> &Interval {
        self.map.ground()
    }

    pub fn map(&self) -> &PiecewiseMap {
        &self.map
    }

    pub fn f(&self) -> &Expr {
        &self.f
    }

    pub fn f_src(&self) -> &str {
        &self.f_src
    }

    pub fn eps0(&self) -> f64 {
        self.eps0
    }

    fn check_finite(&self) -> Result<(), ScenarioError> {
        let (lo, hi) = (self.ground().lo().value, self.ground().hi().value);
        for x in uniform_grid(lo, hi, 64) {
            for y in uniform_grid(lo, hi, 64) {
                match self.f.at(x, y) {
                    Ok(v) if v.is_finite() => {}
                    _ => return Err(ScenarioError::NotFinite { x, y }),
                }
            }
        }
        Ok(())
    }

    /// `f(x, x) <= 0` at grid points `x` with `x ∈ K_ε(x)`.
    pub fn check_diagonal(&self, eps: f64, grid_n: usize, tol: &Tolerances) -> CheckResult {
        let (lo, hi) = (self.ground().lo().value, self.ground().hi().value);
        let mut witnesses = Vec::new();
        let enlarged = match self.map.enlarge(eps) {
            Ok(k) => k,
            Err(e) => return CheckResult::new("diagonal", true, Some(grid_n), vec![Witness::new(e.to_string())]),
        };
        for x in uniform_grid(lo, hi, grid_n) {
            if !enlarged.eval_at(x).is_ok_and(|s| s.contains(x)) {
                continue;
            }
            match self.f.at(x, x) {
                Ok(v) if v <= tol.strict => {}
                Ok(v) => witnesses.push(Witness::new("f(x,x) > 0").at("x", x).value("f(x,x)", v)),
                Err(e) => witnesses.push(Witness::new(e.to_string()).at("x", x)),
            }
        }
        let mut r = CheckResult::new("diagonal", false, Some(grid_n), witnesses);
        if eps > self.eps0 {
            r.notes.push(format!("eps = {eps} exceeds eps0 = {}", self.eps0));
        }
        r
    }

    /// Sampled quasiconcavity of `f(x, ·)`.
    pub fn check_quasiconcave_y(&self, grid_n: usize, tol: &Tolerances) -> CheckResult {
        let (lo, hi) = (self.ground().lo().value, self.ground().hi().value);
        let xs: Vec<f64> = uniform_grid(lo, hi, grid_n.min(64)).collect();
        let ys: Vec<f64> = uniform_grid(lo, hi, grid_n.min(32)).collect();
        let mut witnesses = Vec::new();
        for &x in &xs {
            for (i, &y1) in ys.iter().enumerate() {
                for &y2 in &ys[i + 1..] {
                    let (Ok(f1), Ok(f2)) = (self.f.at(x, y1), self.f.at(x, y2)) else { continue };
                    for lambda in [0.25, 0.5, 0.75] {
                        let y = lambda * y1 + (1.0 - lambda) * y2;
                        let Ok(fm) = self.f.at(x, y) else { continue };
                        if fm < f1.min(f2) - tol.strict {
                            witnesses.push(
                                Witness::new("f(x, ·) drops below the smaller endpoint value")
                                    .at("x", x)
                                    .at("y1", y1)
                                    .at("y2", y2)
                                    .at("lambda", lambda)
                                    .value("f(x,y1)", f1)
                                    .value("f(x,y2)", f2)
                                    .value("f(x,y)", fm),
                            );
                        }
                    }
                }
            }
        }
        CheckResult::new("quasiconcave_y", false, Some(grid_n.min(64)), witnesses)
            .with_note("evidence only: sampled on a coarse grid")
    }

    /// Sampled lower semicontinuity of `f(·, y)`.
    pub fn check_lsc_x(&self, grid_n: usize, tol: &Tolerances) -> CheckResult {
        check_lsc_x(&self.f, self.ground(), grid_n, tol.lsc)
    }

    /// Sampled upper semicontinuity of `f(·, y)`, as lsc of `-f`.
    pub fn check_usc_x(&self, grid_n: usize, tol: &Tolerances) -> CheckResult {
        let mut r = check_lsc_x(&self.f.negated(), self.ground(), grid_n, tol.lsc);
        r.name = "usc_x".into();
        r
    }
}

/// Sampled lower semicontinuity of `x ↦ f(x, y)` for grid `y`.
pub fn check_lsc_x<B: Bifunction>(f: &B, ground: &Interval, grid_n: usize, tol: f64) -> CheckResult {
    let (lo, hi) = (ground.lo().value, ground.hi().value);
    let mut witnesses = Vec::new();
    for y in uniform_grid(lo, hi, grid_n) {
        for w in sampled_lsc(ground, grid_n, tol, &[], |x| f.at(x, y).ok()) {
            witnesses.push(w.at("y", y));
        }
    }
    CheckResult::new("lsc_x", false, Some(grid_n), witnesses)
        .with_note("evidence only: sampled neighbourhood drop test")
}

/// Sampled lsc test for a real function on `ground`.
///
/// At each grid point (and each extra point) the drop `h(x) - h(x+δ)` is
/// measured for `δ = ±s, ±s/4, ..., ±s/256` with `s` the grid spacing. A
/// continuous function has drops that shrink with `δ`; the point is flagged
/// only when the drop exceeds `tol` at every scale and does not shrink.
pub fn sampled_lsc(
    ground: &Interval,
    grid_n: usize,
    tol: f64,
    extra: &[f64],
    h: impl Fn(f64) -> Option<f64>,
) -> Vec<Witness> {
    let (lo, hi) = (ground.lo().value, ground.hi().value);
    let step = (hi - lo) / grid_n.max(1) as f64;
    let mut xs: Vec<f64> = uniform_grid(lo, hi, grid_n).chain(extra.iter().copied()).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut witnesses = Vec::new();
    for x in xs {
        let Some(v) = h(x) else { continue };
        let threshold = tol.max(64.0 * f64::EPSILON * v.abs());
        for sign in [-1.0, 1.0] {
            let mut drops = Vec::with_capacity(5);
            for k in 0..5 {
                let x2 = x + sign * step / 4f64.powi(k);
                if !ground.contains(x2) {
                    break;
                }
                match h(x2) {
                    Some(v2) => drops.push(v - v2),
                    None => break,
                }
            }
            if drops.len() < 5 {
                continue;
            }
            let persistent = drops.iter().all(|&d| d > threshold) && drops.windows(2).all(|w| w[1] > 0.5 * w[0]);
            if persistent {
                witnesses.push(
                    Witness::new("value drops by a non-vanishing amount arbitrarily close to x")
                        .at("x", x)
                        .at("delta", sign * step / 256.0)
                        .value("h(x)", v)
                        .value("h(x+delta)", v - drops[4]),
                );
            }
        }
    }
    witnesses
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainFile {
    lo: f64,
    lo_kind: Kind,
    hi: f64,
    hi_kind: Kind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImageFile {
    lo: [f64; 2],
    lo_kind: Kind,
    hi: [f64; 2],
    hi_kind: Kind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum ImageSpec {
    One(ImageFile),
    Many(Vec<ImageFile>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PieceFile {
    domain: DomainFile,
    image: ImageSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    ground: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eps0: Option<f64>,
    f: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    convex: Option<bool>,
    pieces: Vec<PieceFile>,
}

impl ScenarioFile {
    fn build(self) -> Result<Scenario, ScenarioError> {
        let [lo, hi] = self.ground;
        let ground = Interval::new(Endpoint::closed(lo), Endpoint::closed(hi))
            .map_err(|e| ScenarioError::Invalid(format!("ground: {e}")))?;
        let mut pieces = Vec::with_capacity(self.pieces.len());
        for (i, p) in self.pieces.into_iter().enumerate() {
            let d = p.domain;
            let domain =
                Interval::new(Endpoint { value: d.lo, kind: d.lo_kind }, Endpoint { value: d.hi, kind: d.hi_kind })
                    .map_err(|e| ScenarioError::Invalid(format!("piece {i} domain: {e}")))?;
            let images = match p.image {
                ImageSpec::One(im) => vec![im],
                ImageSpec::Many(v) => v,
            };
            let image = images
                .into_iter()
                .map(|im| ImagePart {
                    lo: AffineBound { a: im.lo[0], b: im.lo[1], kind: im.lo_kind },
                    hi: AffineBound { a: im.hi[0], b: im.hi[1], kind: im.hi_kind },
                })
                .collect();
            pieces.push(Piece { domain, image });
        }
        let map = PiecewiseMap::new(ground, pieces)?;
        if self.convex.unwrap_or(true) {
            map.require_convex()?;
        }
        Scenario::new(self.name, map, &self.f, self.eps0.unwrap_or(1.0))
    }

    fn from_scenario(s: &Scenario) -> ScenarioFile {
        let image_file = |p: &ImagePart| ImageFile {
            lo: [p.lo.a, p.lo.b],
            lo_kind: p.lo.kind,
            hi: [p.hi.a, p.hi.b],
            hi_kind: p.hi.kind,
        };
        let pieces = s
            .map
            .pieces()
            .iter()
            .map(|p| PieceFile {
                domain: DomainFile {
                    lo: p.domain.lo().value,
                    lo_kind: p.domain.lo().kind,
                    hi: p.domain.hi().value,
                    hi_kind: p.domain.hi().kind,
                },
                image: match p.image.as_slice() {
                    [one] => ImageSpec::One(image_file(one)),
                    many => ImageSpec::Many(many.iter().map(image_file).collect()),
                },
            })
            .collect();
        ScenarioFile {
            name: s.name.clone(),
            ground: [s.ground().lo().value, s.ground().hi().value],
            eps0: Some(s.eps0),
            f: s.f_src.clone(),
            convex: (!s.map.is_convex_valued()).then_some(false),
            pieces,
        }
    }
}
