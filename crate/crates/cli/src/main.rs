mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use oustein_core::counterexample::{counterexample_report, CounterexampleReport};
use oustein_core::paths::DEFAULT_LEVEL;
use oustein_core::report::{to_canonical_json, to_canonical_value, Cell, Report, Table};
use oustein_core::schauder::sample_brownian;
use oustein_core::semigroup::{log_grid, semigroup_apply};
use oustein_core::stein::{
    ftc_check, lemma3_check, stein_residual, stein_solution, SteinReport, DEFAULT_JTRUNC,
};
use oustein_core::suite::{run_suite, SuiteConfig};
use oustein_core::{by_name, Functional, MCSpec, Path, QuadratureSpec};

use config::{parse_path, Format, RunConfig};

const DEFAULT_N: usize = 10_000;
const DEFAULT_KMAX: u64 = 8;

#[derive(Parser, Debug)]
#[command(
    name = "oustein",
    version,
    about = "OU semigroup and Stein operator checks on Brownian path space"
)]
struct Cli {
    /// Flat JSON file with any of the option keys; flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    flags: RunConfig,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy, Debug, PartialEq, Eq)]
enum Command {
    /// Draw one Brownian path (JSON or t,w CSV)
    Sample,
    /// Estimate T_u f(w)
    SemigroupEval,
    /// Solve the Stein equation at w
    SteinSolve,
    /// Residual of the Stein equation, plus the finite-time identity with --t
    SteinVerify,
    /// Finite-time identity at horizon --t
    Lemma3,
    /// Integrated-generator identity at horizon --r
    Ftc,
    /// Witness table for the failure of strong continuity
    Counterexample,
    /// Acceptance criteria 1 to 10
    Suite,
}

enum Failure {
    Config(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Config(e.to_string())
    }
}

/// What a command produced: the report text and whether its checks passed.
struct Output {
    text: String,
    passed: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Config(msg)) => {
            eprintln!("oustein: {msg}");
            ExitCode::from(2)
        }
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, Failure> {
    let base = match &cli.config {
        Some(file) => {
            let text = std::fs::read_to_string(file).map_err(|e| {
                Failure::Config(format!("cannot read config `{}`: {e}", file.display()))
            })?;
            RunConfig::from_json(&text).map_err(Failure::Config)?
        }
        None => RunConfig::default(),
    };
    let mut cfg = base.overridden_by(&cli.flags);
    if cfg.seed.is_none() {
        if let Ok(text) = std::env::var("OUSTEIN_SEED") {
            let seed = text.trim().parse().map_err(|_| {
                Failure::Config(format!(
                    "OUSTEIN_SEED = `{text}` is not an unsigned integer"
                ))
            })?;
            cfg.seed = Some(seed);
        }
    }
    cfg.validate().map_err(Failure::Config)?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<bool, Failure> {
    let cfg = resolve(cli)?;
    let output = match cfg.threads {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()?
            .install(|| dispatch(cli.command, &cfg))?,
        None => dispatch(cli.command, &cfg)?,
    };
    emit(&output.text, cfg.out.as_ref())?;
    Ok(output.passed)
}

fn emit(text: &str, target: Option<&PathBuf>) -> Result<(), Failure> {
    match target {
        Some(file) => std::fs::write(file, text)
            .map_err(|e| Failure::Config(format!("cannot write `{}`: {e}", file.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn require<T: Clone>(value: &Option<T>, flag: &str) -> Result<T, Failure> {
    value
        .clone()
        .ok_or_else(|| Failure::Config(format!("missing required option --{flag}")))
}

fn mc_spec(cfg: &RunConfig) -> Result<MCSpec, Failure> {
    let mc = MCSpec::new(
        cfg.n.unwrap_or(DEFAULT_N),
        cfg.level.unwrap_or(DEFAULT_LEVEL),
        cfg.seed.unwrap_or(0),
    )?;
    Ok(mc.with_antithetic(cfg.antithetic.unwrap_or(false)))
}

fn quad_spec(cfg: &RunConfig) -> Result<QuadratureSpec, Failure> {
    let d = QuadratureSpec::default();
    let quad = QuadratureSpec {
        u_max: cfg.u_max.unwrap_or(d.u_max),
        panels: cfg.panels.unwrap_or(d.panels),
        nodes_per_panel: cfg.nodes.unwrap_or(d.nodes_per_panel),
        mc: mc_spec(cfg)?,
        rel_tol: cfg.rel_tol.unwrap_or(d.rel_tol),
    };
    quad.validate()?;
    Ok(quad)
}

fn functional(cfg: &RunConfig) -> Result<std::sync::Arc<dyn Functional>, Failure> {
    Ok(by_name(&require(&cfg.functional, "functional")?)?)
}

fn path(cfg: &RunConfig) -> Result<Path, Failure> {
    parse_path(&require(&cfg.path, "path")?).map_err(Failure::Config)
}

/// The effective configuration echoed into reports. Output target and
/// worker count are left out so they cannot change the report bytes.
fn echo(cfg: &RunConfig) -> Result<Value, Failure> {
    let mut shown = cfg.clone();
    shown.out = None;
    shown.threads = None;
    shown.format = None;
    let mut value = to_canonical_value(&shown)?;
    if let Value::Object(map) = &mut value {
        map.retain(|_, v| !v.is_null());
    }
    Ok(value)
}

fn render<T: Serialize>(
    cfg: &RunConfig,
    value: &T,
    table: impl FnOnce() -> Table,
) -> Result<String, Failure> {
    Ok(match cfg.format.unwrap_or_default() {
        Format::Json => to_canonical_json(value)?,
        Format::Csv => table().to_csv(),
    })
}

fn dispatch(command: Command, cfg: &RunConfig) -> Result<Output, Failure> {
    match command {
        Command::Sample => sample(cfg),
        Command::SemigroupEval => semigroup_eval(cfg),
        Command::SteinSolve => {
            let (g, w, quad) = (functional(cfg)?, path(cfg)?, quad_spec(cfg)?);
            stein_output(
                "stein-solve",
                cfg,
                vec![stein_solution(g.as_ref(), &w, &quad)?],
            )
        }
        Command::SteinVerify => {
            let (g, w, quad) = (functional(cfg)?, path(cfg)?, quad_spec(cfg)?);
            let jtrunc = cfg.jtrunc.unwrap_or(DEFAULT_JTRUNC);
            let mut reports = vec![stein_residual(g.as_ref(), &w, &quad, jtrunc)?];
            if let Some(t) = cfg.t {
                reports.push(lemma3_check(g.as_ref(), &w, t, &quad, jtrunc)?);
            }
            stein_output("stein-verify", cfg, reports)
        }
        Command::Lemma3 => {
            let (g, w, quad) = (functional(cfg)?, path(cfg)?, quad_spec(cfg)?);
            let t = require(&cfg.t, "t")?;
            let jtrunc = cfg.jtrunc.unwrap_or(DEFAULT_JTRUNC);
            stein_output(
                "lemma3",
                cfg,
                vec![lemma3_check(g.as_ref(), &w, t, &quad, jtrunc)?],
            )
        }
        Command::Ftc => {
            let (f, w, quad) = (functional(cfg)?, path(cfg)?, quad_spec(cfg)?);
            let r = require(&cfg.r, "r")?;
            stein_output("ftc", cfg, vec![ftc_check(f.as_ref(), &w, r, &quad)?])
        }
        Command::Counterexample => counterexample(cfg),
        Command::Suite => suite(cfg),
    }
}

fn sample(cfg: &RunConfig) -> Result<Output, Failure> {
    let drawn = sample_brownian(cfg.level.unwrap_or(DEFAULT_LEVEL), cfg.seed.unwrap_or(0))?;
    let text = match cfg.format.unwrap_or_default() {
        Format::Json => drawn.path.to_json()? + "\n",
        Format::Csv => {
            let mut buf = Vec::new();
            drawn.path.write_csv(&mut buf)?;
            String::from_utf8(buf)?
        }
    };
    Ok(Output { text, passed: true })
}

fn semigroup_eval(cfg: &RunConfig) -> Result<Output, Failure> {
    let f = functional(cfg)?;
    let w = path(cfg)?;
    let u = require(&cfg.u, "u")?;
    let est = semigroup_apply(f.as_ref(), u, &w, &mc_spec(cfg)?)?;
    let text = render(cfg, &est, || {
        let mut t = Table::new(&["mean", "stderr", "n", "seed"]);
        t.push(vec![
            est.mean.into(),
            est.stderr.into(),
            (est.n as u64).into(),
            est.seed.into(),
        ]);
        t
    })?;
    Ok(Output { text, passed: true })
}

const STEIN_COLUMNS: [&str; 13] = [
    "check",
    "functional",
    "value",
    "reference",
    "residual",
    "stderr",
    "tail_bound",
    "series_tail",
    "scale",
    "tolerance",
    "passed",
    "n",
    "seed",
];

fn optional(x: Option<f64>) -> Cell {
    Cell::Float(x.unwrap_or(f64::NAN))
}

fn stein_output(
    command: &str,
    cfg: &RunConfig,
    reports: Vec<SteinReport>,
) -> Result<Output, Failure> {
    let mut report = Report::new(command, echo(cfg)?);
    for r in &reports {
        report.push(r.check.clone(), r.passed, r)?;
    }
    let text = render(cfg, &report, || {
        let mut t = Table::new(&STEIN_COLUMNS);
        for r in &reports {
            t.push(vec![
                r.check.as_str().into(),
                r.functional.as_str().into(),
                r.value.into(),
                optional(r.reference),
                optional(r.residual),
                r.stderr.into(),
                optional(r.tail_bound),
                optional(r.series_tail),
                r.scale.into(),
                r.tolerance.into(),
                r.passed.into(),
                (r.n as u64).into(),
                r.seed.into(),
            ]);
        }
        t
    })?;
    Ok(Output {
        text,
        passed: report.passed,
    })
}

#[derive(Serialize)]
struct CounterexampleOutput<'a> {
    command: &'static str,
    config: Value,
    #[serde(flatten)]
    report: &'a CounterexampleReport,
}

fn counterexample(cfg: &RunConfig) -> Result<Output, Failure> {
    let kmax = cfg.kmax.unwrap_or(DEFAULT_KMAX);
    let ks: Vec<u64> = (1..=kmax).collect();
    let report = counterexample_report(&ks, &log_grid(0.1, 1e-4, 4)?, &mc_spec(cfg)?)?;
    let mut shown = echo(cfg)?;
    shown["kmax"] = json!(kmax);
    let full = CounterexampleOutput {
        command: "counterexample",
        config: shown,
        report: &report,
    };
    let text = render(cfg, &full, || {
        let mut t = Table::new(&["k", "u_k", "gap_ratio", "stderr", "surrogate"]);
        for row in &report.witnesses {
            t.push(vec![
                row.k.into(),
                row.u_k.into(),
                row.gap_ratio.into(),
                row.stderr.into(),
                row.surrogate.into(),
            ]);
        }
        t
    })?;
    Ok(Output {
        text,
        passed: report.passed,
    })
}

fn suite(cfg: &RunConfig) -> Result<Output, Failure> {
    let d = SuiteConfig::default();
    let sc = SuiteConfig {
        n: cfg.n.unwrap_or(d.n),
        level: cfg.level.unwrap_or(d.level),
        seed: cfg.seed.unwrap_or(d.seed),
        jtrunc: cfg.jtrunc.unwrap_or(d.jtrunc),
        antithetic: cfg.antithetic.unwrap_or(d.antithetic),
        u_max: cfg.u_max.unwrap_or(d.u_max),
        panels: cfg.panels.unwrap_or(d.panels),
        nodes_per_panel: cfg.nodes.unwrap_or(d.nodes_per_panel),
        rel_tol: cfg.rel_tol.unwrap_or(d.rel_tol),
        ..d
    };
    let report = run_suite(&sc)?;
    let text = render(cfg, &report, || {
        let mut t = Table::new(&["check", "passed"]);
        for c in &report.checks {
            t.push(vec![c.name.as_str().into(), c.passed.into()]);
        }
        t
    })?;
    Ok(Output {
        text,
        passed: report.passed,
    })
}
