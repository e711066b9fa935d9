//! `fractdim`: run experiment configs and the built-in acceptance suites.
//!
//! Exit codes: 0 all assertions pass, 1 an assertion failed, 2 the config
//! or suite name is malformed, 3 a precondition was violated.

// `!(x >= 0.0)` is deliberate: NaN must fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod experiment;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use fractdim::verify::{self, Check, Relation};
use serde_json::{json, Value};

use config::{Assertion, Config, SCHEMA_VERSION};

#[derive(Parser)]
#[command(
    name = "fractdim",
    version,
    about = "Dimension experiments for self-similar measures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; results do not depend on it.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        workers: Option<u64>,
        /// Replace the seed given in the config.
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Run a named acceptance suite and print its comparison table.
    Verify {
        /// One of: all, acceptance, closed-form, measures, estimation,
        /// marstrand, marstrand-small, ede, transversality, determinism.
        suite: String,
        /// Also write the tables produced along the way here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum Failure {
    Schema(String),
    Precondition(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Schema(_) => 2,
            Failure::Precondition(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Schema(m) => write!(f, "schema error: {m}"),
            Failure::Precondition(m) => write!(f, "precondition violated: {m}"),
        }
    }
}

impl From<fractdim::Error> for Failure {
    fn from(e: fractdim::Error) -> Self {
        Failure::Precondition(e.to_string())
    }
}

fn io_failure(what: &str, path: &Path, e: std::io::Error) -> Failure {
    Failure::Precondition(format!("{what} {}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            workers,
            seed_override,
        } => run(&config, &out, workers.map(|w| w as usize), seed_override),
        Command::Verify { suite, out } => verify_suite(&suite, out.as_deref()),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            eprintln!("fractdim: {f}");
            ExitCode::from(f.code())
        }
    }
}

/// Parse with field paths in the diagnostics, e.g.
/// `ifs.maps[0].ratio: invalid type ... at line 4 column 20`.
fn parse_config(text: &str) -> Result<(Config, Value), Failure> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: Config = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            Failure::Schema(inner.to_string())
        } else {
            Failure::Schema(format!("{path}: {inner}"))
        }
    })?;
    let echo = serde_json::from_str(text).map_err(|e| Failure::Schema(e.to_string()))?;
    config.validate().map_err(Failure::Schema)?;
    Ok((config, echo))
}

fn run(
    config_path: &Path,
    out: &Path,
    workers: Option<usize>,
    seed_override: Option<u64>,
) -> Result<bool, Failure> {
    let started = Instant::now();
    let text = fs::read_to_string(config_path)
        .map_err(|e| io_failure("cannot read config", config_path, e))?;
    let (config, echo) = parse_config(&text)?;
    let seed = seed_override.unwrap_or(config.seed);
    let setup = config.build()?;
    fs::create_dir_all(out).map_err(|e| io_failure("cannot create output directory", out, e))?;

    let work = || experiment::run(&config, &setup, seed);
    let outcome = match workers {
        Some(n) => fractdim::par::with_workers(n, work)??,
        None => work()?,
    };

    let mut files = Vec::new();
    for (stem, table) in &outcome.tables {
        let name = format!("{stem}.csv");
        write(&out.join(&name), &table.to_csv())?;
        files.push(name);
    }

    let checks: Vec<Check> = config
        .assertions
        .iter()
        .flat_map(|a| {
            let got = outcome
                .metrics
                .iter()
                .find(|(n, _)| *n == a.metric)
                .map_or(f64::NAN, |(_, v)| *v);
            assertion_checks(a, got)
        })
        .collect();
    let pass = checks.iter().all(|c| c.pass);
    if !checks.is_empty() {
        print_checks(&checks);
    }

    let metrics: serde_json::Map<String, Value> = outcome
        .metrics
        .iter()
        .map(|(n, v)| (n.clone(), json!(v)))
        .collect();
    let summary = json!({
        "experiment": config.experiment.kind(),
        "pass": pass,
        "metrics": metrics,
        "assertions": checks.iter().map(check_json).collect::<Vec<_>>(),
    });
    write(&out.join("summary.json"), &pretty(&summary))?;

    let manifest = json!({
        "schema_version": SCHEMA_VERSION,
        "config": echo,
        "config_path": config_path.display().to_string(),
        "seed": seed,
        "seed_overridden": seed_override.is_some(),
        "workers": workers,
        "budget": fractdim::budget(),
        "versions": {
            "fractdim": env!("CARGO_PKG_VERSION"),
            "parallel": cfg!(feature = "parallel"),
        },
        "outputs": files,
        "wall_seconds": started.elapsed().as_secs_f64(),
    });
    write(&out.join("manifest.json"), &pretty(&manifest))?;

    println!(
        "{}: {} ({} assertions) -> {}",
        config.experiment.kind(),
        if pass { "PASS" } else { "FAIL" },
        checks.len(),
        out.display()
    );
    Ok(pass)
}

fn assertion_checks(a: &Assertion, got: f64) -> Vec<Check> {
    let name = a.metric.clone();
    match a.expected {
        Some(x) => vec![Check::within(name, x, got, a.tolerance.unwrap_or(0.0))],
        None => a
            .min
            .map(|lo| Check::at_least(name.clone(), lo, got, 0.0))
            .into_iter()
            .chain(a.max.map(|hi| Check::at_most(name.clone(), hi, got, 0.0)))
            .collect(),
    }
}

fn check_json(c: &Check) -> Value {
    let relation = match c.relation {
        Relation::Within => "within",
        Relation::AtMost => "at_most",
        Relation::AtLeast => "at_least",
        Relation::Holds => "holds",
    };
    json!({
        "metric": c.name,
        "relation": relation,
        "expected": c.expected,
        "tolerance": c.tolerance,
        "got": c.got,
        "pass": c.pass,
    })
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| io_failure("cannot write", path, e))
}

fn print_checks(checks: &[Check]) {
    let name_width = checks
        .iter()
        .map(|c| c.name.chars().count())
        .max()
        .unwrap_or(0)
        .max(5);
    println!(
        "{:<name_width$}  {:<24}  {:<16}  {:<10}  verdict",
        "check", "expected", "got", "tolerance"
    );
    for c in checks {
        let tolerance = match c.relation {
            Relation::Holds => "-".to_string(),
            _ => format!("{:.0e}", c.tolerance),
        };
        println!(
            "{:<name_width$}  {:<24}  {:<16}  {:<10}  {}",
            c.name,
            c.expected_text(),
            c.got_text(),
            tolerance,
            if c.pass { "PASS" } else { "FAIL" }
        );
    }
}

fn verify_suite(name: &str, out: Option<&Path>) -> Result<bool, Failure> {
    let (ids, scale) = verify::suite(name).ok_or_else(|| {
        Failure::Schema(format!(
            "unknown suite `{name}`; known: {}",
            verify::SUITES.join(", ")
        ))
    })?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)
            .map_err(|e| io_failure("cannot create output directory", dir, e))?;
    }
    let reports = verify::run(&ids, scale);
    for r in &reports {
        println!("== criterion {}: {}", r.id, r.title);
        print_checks(&r.checks);
        println!("{}", r.summary());
        if let Some(dir) = out {
            for (stem, table) in &r.tables {
                write(&dir.join(format!("{stem}.csv")), &table.to_csv())?;
            }
        }
    }
    let failed = reports.iter().filter(|r| !r.pass()).count();
    println!(
        "{name}: {} of {} criteria passed",
        reports.len() - failed,
        reports.len()
    );
    Ok(failed == 0)
}
