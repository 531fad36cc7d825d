//! `qep`: load scenarios, run hypothesis checks, solve, build selections and
//! write JSON reports.
//!
//! Exit codes: 0 success, 1 certified negative result, 2 usage or
//! validation error, 3 hypothesis violation.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use qep_core::marginal::g_value;
use qep_core::solver::{approx_solve, eps_solution_search, exact_infimum, exact_solve, verify_certificate};
use qep_core::{
    Certificate, CertificateKind, CheckResult, MarginalError, Scenario, SelectionError, SelectionProblem, SolverError,
    Tolerances, DEFAULT_GRID,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NEGATIVE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_HYPOTHESIS: i32 = 3;

/// Stated value of the constant `g` built on `fix K` for the counterexample.
const STATED_G_FIX: f64 = -1.0;

#[derive(Debug, Parser)]
#[command(name = "qep", version, about = "Quasiequilibrium problems on compact intervals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the hypotheses on K and f.
    Check(ScenarioArgs),
    /// Fixed-point sets of K and, with --eps, of K_eps.
    Fix(ScenarioArgs),
    /// Approximate solution on cl fix K_eps (needs --eps).
    Solve(ScenarioArgs),
    /// Exact solutions on fix K.
    SolveExact(ScenarioArgs),
    /// ε-solution search on fix K (needs --eps-level).
    EpsSearch(ScenarioArgs),
    /// Continuous selection of the approximate-solution H map (needs --eps).
    Select(ScenarioArgs),
    /// The built-in counterexample: ε-solution search at level --eps (default 1).
    Counterexample(Common),
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Scenario JSON file.
    scenario: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args, Clone)]
struct Common {
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long = "eps-prime", default_value_t = 0.1)]
    eps_prime: f64,
    #[arg(long = "eps-level")]
    eps_level: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_GRID, value_parser = parse_grid)]
    grid: usize,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long = "tol-cert")]
    tol_cert: Option<f64>,
    #[arg(long = "tol-lsc")]
    tol_lsc: Option<f64>,
}

fn parse_grid(s: &str) -> Result<usize, String> {
    let n: usize = s.parse().map_err(|e| format!("{e}"))?;
    if n < 16 {
        return Err(format!("grid must be at least 16, got {n}"));
    }
    Ok(n)
}

/// The fully resolved configuration embedded in every report.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub scenario_path: Option<String>,
    pub eps: Option<f64>,
    pub eps_prime: f64,
    pub eps_level: Option<f64>,
    pub grid_n: usize,
    pub report_path: Option<String>,
    pub tolerances: Tolerances,
}

#[derive(Debug, Default)]
struct Report {
    results: serde_json::Map<String, Value>,
    certificates: Vec<Value>,
    witnesses: Vec<Value>,
}

impl Report {
    fn result(&mut self, key: &str, v: impl Serialize) {
        self.results.insert(key.to_string(), to_value(v));
    }

    fn check(&mut self, r: &CheckResult) {
        for w in &r.witnesses {
            self.witnesses.push(json!({"check": r.name, "witness": w}));
        }
        self.result(&r.name, r);
    }

    fn certificate(&mut self, c: &Certificate) {
        self.certificates.push(to_value(c));
    }
}

fn to_value(v: impl Serialize) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

/// A failure that ends the run with an exit code and an "error" field.
struct Failure {
    code: i32,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, kind: "usage", message: message.into() }
    }
}

impl From<SolverError> for Failure {
    fn from(e: SolverError) -> Self {
        let (code, kind) = match &e {
            SolverError::EmptyFixedSet(_) | SolverError::Marginal(MarginalError::EmptyFixedSet(_)) => {
                (EXIT_HYPOTHESIS, "hypothesis_violation")
            }
            _ => (EXIT_USAGE, "validation"),
        };
        Failure { code, kind, message: e.to_string() }
    }
}

impl From<SelectionError> for Failure {
    fn from(e: SelectionError) -> Self {
        let (code, kind) = match &e {
            SelectionError::EmptyH(_)
            | SelectionError::CoverFailed { .. }
            | SelectionError::NoOpenSections(_)
            | SelectionError::Marginal(MarginalError::EmptyFixedSet(_)) => (EXIT_HYPOTHESIS, "hypothesis_violation"),
            _ => (EXIT_USAGE, "validation"),
        };
        Failure { code, kind, message: e.to_string() }
    }
}

impl From<MarginalError> for Failure {
    fn from(e: MarginalError) -> Self {
        let code = if matches!(e, MarginalError::EmptyFixedSet(_)) { EXIT_HYPOTHESIS } else { EXIT_USAGE };
        Failure {
            code,
            kind: if code == EXIT_HYPOTHESIS { "hypothesis_violation" } else { "validation" },
            message: e.to_string(),
        }
    }
}

/// Parses `argv` (including the program name), runs the command, writes the
/// report and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            eprint!("{}", e.render());
            let err = json!({"error": {"kind": "usage", "message": e.kind().to_string()}});
            println!("{}", serde_json::to_string_pretty(&err).unwrap_or_default());
            return EXIT_USAGE;
        }
    };
    let (name, scenario_path, common) = match &cli.command {
        Command::Check(a) => ("check", Some(a.scenario.clone()), a.common.clone()),
        Command::Fix(a) => ("fix", Some(a.scenario.clone()), a.common.clone()),
        Command::Solve(a) => ("solve", Some(a.scenario.clone()), a.common.clone()),
        Command::SolveExact(a) => ("solve-exact", Some(a.scenario.clone()), a.common.clone()),
        Command::EpsSearch(a) => ("eps-search", Some(a.scenario.clone()), a.common.clone()),
        Command::Select(a) => ("select", Some(a.scenario.clone()), a.common.clone()),
        Command::Counterexample(c) => ("counterexample", None, c.clone()),
    };
    let defaults = Tolerances::default();
    let config = RunConfig {
        command: name.to_string(),
        scenario_path: scenario_path.as_ref().map(|p| p.display().to_string()),
        eps: common.eps,
        eps_prime: common.eps_prime,
        eps_level: common.eps_level,
        grid_n: common.grid,
        report_path: common.report.as_ref().map(|p| p.display().to_string()),
        tolerances: Tolerances {
            cert: common.tol_cert.unwrap_or(defaults.cert),
            lsc: common.tol_lsc.unwrap_or(defaults.lsc),
            ..defaults
        },
    };

    let started = Instant::now();
    let mut report = Report::default();
    let loaded = match &scenario_path {
        Some(p) => {
            Scenario::load(p).map_err(|e| Failure { code: EXIT_USAGE, kind: "validation", message: e.to_string() })
        }
        None => Ok(Scenario::counterexample()),
    };
    let outcome = loaded.and_then(|s| {
        validate(&config)?;
        let code = execute(&cli.command, &s, &config, &mut report)?;
        Ok((s, code))
    });
    let (scenario, code, error) = match outcome {
        Ok((s, code)) => (Some(s), code, None),
        Err(f) => (None, f.code, Some(json!({"kind": f.kind, "message": f.message}))),
    };

    let scenario_json = match &scenario {
        Some(s) => json!({
            "name": s.name(),
            "source": config.scenario_path.clone().unwrap_or_else(|| "built-in".into()),
            "ground": s.ground().to_string(),
            "f": s.f_src(),
            "eps0": s.eps0(),
        }),
        None => json!({"source": config.scenario_path.clone().unwrap_or_else(|| "built-in".into())}),
    };
    let mut doc = json!({
        "scenario": scenario_json,
        "command": name,
        "config": to_value(&config),
        "results": Value::Object(report.results),
        "certificates": report.certificates,
        "witnesses": report.witnesses,
        "timings": {"elapsed_ms": started.elapsed().as_secs_f64() * 1e3},
    });
    if let Some(e) = error {
        doc["error"] = e;
    }
    let text = serde_json::to_string_pretty(&doc).unwrap_or_default();
    match &config.report_path {
        Some(p) => {
            if let Err(e) = std::fs::write(p, text + "\n") {
                eprintln!("cannot write report {p}: {e}");
                return EXIT_USAGE;
            }
        }
        None => println!("{text}"),
    }
    code
}

fn validate(c: &RunConfig) -> Result<(), Failure> {
    let positive = |name: &str, v: Option<f64>| match v {
        Some(v) if !(v > 0.0 && v.is_finite()) => Err(Failure::usage(format!("--{name} must be positive, got {v}"))),
        _ => Ok(()),
    };
    positive("eps", c.eps)?;
    positive("eps-level", c.eps_level)?;
    positive("eps-prime", Some(c.eps_prime))?;
    positive("tol-cert", Some(c.tolerances.cert))?;
    positive("tol-lsc", Some(c.tolerances.lsc))?;
    let needs = |flag: &str, v: Option<f64>| {
        v.map(|_| ()).ok_or_else(|| Failure::usage(format!("{} requires --{flag}", c.command)))
    };
    match c.command.as_str() {
        "solve" | "select" => needs("eps", c.eps),
        "eps-search" => needs("eps-level", c.eps_level),
        _ => Ok(()),
    }
}

fn execute(cmd: &Command, s: &Scenario, c: &RunConfig, report: &mut Report) -> Result<i32, Failure> {
    let tol = &c.tolerances;
    let grid = c.grid_n;
    match cmd {
        Command::Check(_) => {
            let eps = c.eps.unwrap_or(s.eps0());
            let checks = [
                s.map().check_lsc(grid, tol.lsc),
                s.map().check_open_lower_sections(grid),
                s.check_diagonal(eps, grid, tol),
                s.check_quasiconcave_y(grid, tol),
                s.check_lsc_x(grid, tol),
            ];
            let ok = checks.iter().all(|r| r.passed);
            for r in &checks {
                report.check(r);
            }
            report.result("convex_valued", s.map().is_convex_valued());
            report.result("diagonal_eps", eps);
            Ok(if ok { EXIT_OK } else { EXIT_NEGATIVE })
        }
        Command::Fix(_) => {
            report.result("fix_K", s.map().fixed_point_set());
            if let Some(eps) = c.eps {
                let fix = s.map().enlarge(eps).map_err(|e| Failure::usage(e.to_string()))?.fixed_point_set();
                report.result("fix_K_eps", &fix);
                report.result("closure_fix_K_eps", fix.closure());
            }
            Ok(EXIT_OK)
        }
        Command::Solve(_) => {
            let eps = c.eps.expect("validated");
            let cert = approx_solve(s, eps, grid, tol)?;
            let check = verify_certificate(s, &cert, grid, tol);
            report.result("closure_fix_K_eps", &cert.searched);
            report.check(&check);
            report.certificate(&cert);
            Ok(match cert.kind {
                CertificateKind::ApproxSolution if check.passed => EXIT_OK,
                CertificateKind::ApproxSolution => EXIT_NEGATIVE,
                _ => EXIT_HYPOTHESIS,
            })
        }
        Command::SolveExact(_) => {
            let certs = exact_solve(s, grid, tol)?;
            report.result("fix_K", s.map().fixed_point_set());
            let found = certs.iter().any(|c| c.kind == CertificateKind::ExactSolution);
            report.result("solutions", certs.iter().filter_map(|c| c.point).collect::<Vec<_>>());
            for cert in &certs {
                report.certificate(cert);
            }
            Ok(if found { EXIT_OK } else { EXIT_NEGATIVE })
        }
        Command::EpsSearch(_) => {
            let cert = eps_solution_search(s, c.eps_level.expect("validated"), grid, tol)?;
            Ok(eps_search_report(s, &cert, c, report))
        }
        Command::Select(_) => {
            let eps = c.eps.expect("validated");
            let problem = SelectionProblem::approximate_solution(s, eps, c.eps_prime, grid)?;
            let sel = problem.build_selection(grid)?;
            let check = problem.verify_selection(&sel, grid);
            report.result("g", g_value(s, eps, grid)?);
            report.result("c_x", problem.c_x());
            report.result("exact_regions", problem.is_exact());
            report.result("anchors", sel.anchors());
            report.result(
                "samples",
                sel.samples(grid.min(128)).into_iter().map(|(x, p)| json!({"x": x, "phi": p})).collect::<Vec<_>>(),
            );
            report.check(&check);
            Ok(if check.passed { EXIT_OK } else { EXIT_NEGATIVE })
        }
        Command::Counterexample(_) => {
            let level = c.eps.unwrap_or(1.0);
            let cert = eps_solution_search(s, level, grid, tol)?;
            report.result("fix_K", s.map().fixed_point_set());
            let enlarge_eps = 0.5;
            let ke = s.map().enlarge(enlarge_eps).map_err(|e| Failure::usage(e.to_string()))?;
            report.result("fix_K_eps", json!({"eps": enlarge_eps, "set": ke.fixed_point_set()}));
            let inf = exact_infimum(&ke, s.f(), &s.map().fixed_point_set());
            report.result(
                "g_on_fix_K",
                json!({
                    "eps": enlarge_eps,
                    "computed": inf.map(|m| 0.0 - m.value),
                    "attained": inf.map(|m| m.attained),
                    "stated": STATED_G_FIX,
                    "agrees": inf.is_some_and(|m| 0.0 - m.value == STATED_G_FIX),
                }),
            );
            Ok(eps_search_report(s, &cert, c, report))
        }
    }
}

fn eps_search_report(s: &Scenario, cert: &Certificate, c: &RunConfig, report: &mut Report) -> i32 {
    let check = verify_certificate(s, cert, c.grid_n, &c.tolerances);
    report.result("inf_sup", cert.sup_value.value);
    if cert.kind == CertificateKind::Nonexistence {
        report.result("nonexistence", true);
    }
    report.check(&check);
    report.certificate(cert);
    match cert.kind {
        CertificateKind::EpsSolution if check.passed => EXIT_OK,
        CertificateKind::Nonexistence if check.passed => EXIT_NEGATIVE,
        _ => EXIT_NEGATIVE,
    }
}
