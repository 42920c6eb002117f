//! `edp`: run scenarios, check strong eventual consistency, print metrics
//! and regenerate the pinned test vectors.
//!
//! Exit codes: 0 when every requested check passes, 1 when one fails, 2 on
//! usage or IO errors. Set `EDP_LOG` (e.g. `EDP_LOG=debug`) for diagnostics.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use edp_sim::transcript::write_jsonl;
use edp_sim::{run, Outcome, RunOptions, Scenario, SimError};
use log::{error, info};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "edp", version, about = "Extend-only directed poset simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario; write transcript, metrics and verdict.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: print the verdict only).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Metrics file format.
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Run scenarios (files or directories of *.json) and print verdicts.
    Check {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write a verdict summary into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Run one scenario and print its metrics.
    Metrics {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Regenerate the pinned hash and signature vectors and compare.
    Vectors {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
}

/// Usage and IO problems; anything else is a check result.
#[derive(Debug)]
struct Fatal(String);

impl<E: std::fmt::Display> From<E> for Fatal {
    fn from(e: E) -> Self {
        Fatal(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("EDP_LOG"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Fatal(msg)) => {
            eprintln!("edp: {msg}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Command) -> Result<bool, Fatal> {
    match cmd {
        Command::Run { scenario, seed, out, format } => cmd_run(&scenario, seed, out.as_deref(), format),
        Command::Check { paths, seed, out, format } => cmd_check(&paths, seed, out.as_deref(), format),
        Command::Metrics { scenario, seed, out, format } => cmd_metrics(&scenario, seed, out.as_deref(), format),
        Command::Vectors { out, format } => cmd_vectors(out.as_deref(), format),
    }
}

/// Runs a scenario; a run that never quiesces counts as a failed check.
fn simulate(path: &Path, seed: Option<u64>) -> Result<Result<Outcome, String>, Fatal> {
    let scenario = Scenario::load(path)?;
    match run(&scenario, &RunOptions { seed, ..Default::default() }) {
        Ok(o) => Ok(Ok(o)),
        Err(SimError::NotQuiescent(t)) => Ok(Err(format!("no quiescence after {t} ticks"))),
        Err(e) => Err(e.into()),
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    scenario: &'a str,
    seed: u64,
    passed: bool,
    verdict: &'a edp_sim::SecVerdict,
    checks: &'a [edp_sim::run::Check],
    convergence_tick: Option<u64>,
    end_tick: u64,
}

fn summary(o: &Outcome) -> Summary<'_> {
    Summary {
        scenario: &o.scenario.name,
        seed: o.seed,
        passed: o.passed(),
        verdict: &o.verdict,
        checks: &o.checks,
        convergence_tick: o.metrics.convergence_tick,
        end_tick: o.metrics.end_tick,
    }
}

fn verdict_line(o: &Outcome) -> String {
    let v = &o.verdict;
    let mut line = format!(
        "{} {} seed={} self_update={} eventual_update={} strong_convergence={}",
        if o.passed() { "PASS" } else { "FAIL" },
        o.scenario.name,
        o.seed,
        v.self_update,
        v.eventual_update,
        v.strong_convergence
    );
    for e in &v.evidence {
        line.push_str(&format!("\n  {}: replica {} {:?} {}", e.property, e.left, e.right, e.detail));
        if let Some(id) = e.element {
            line.push_str(&format!(" ({})", id.to_hex()));
        }
    }
    for c in o.checks.iter().filter(|c| !c.ok) {
        line.push_str(&format!("\n  expectation failed: {} {}", c.name, c.detail));
    }
    line
}

fn write_metrics(o: &Outcome, dir: &Path, format: Format) -> Result<(), Fatal> {
    match format {
        Format::Csv => {
            o.metrics.write_csv(fs::File::create(dir.join("metrics.csv"))?)?;
            o.metrics.write_updates_csv(fs::File::create(dir.join("updates.csv"))?)?;
        }
        Format::Json => fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(&o.metrics)?)?,
    }
    Ok(())
}

fn cmd_run(path: &Path, seed: Option<u64>, out: Option<&Path>, format: Format) -> Result<bool, Fatal> {
    let o = match simulate(path, seed)? {
        Ok(o) => o,
        Err(msg) => {
            println!("FAIL {}: {msg}", path.display());
            return Ok(false);
        }
    };
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_jsonl(io::BufWriter::new(fs::File::create(dir.join("transcript.jsonl"))?), &o.transcript)?;
        write_metrics(&o, dir, format)?;
        fs::write(dir.join("verdict.json"), serde_json::to_string_pretty(&summary(&o))?)?;
        info!("wrote {}", dir.display());
    }
    println!("{}", verdict_line(&o));
    Ok(o.passed())
}

fn scenario_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, Fatal> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut inner: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| Fatal(format!("{}: {e}", p.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "json"))
                .collect();
            inner.sort();
            files.extend(inner);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        return Err(Fatal("no scenario files found".into()));
    }
    Ok(files)
}

fn cmd_check(paths: &[PathBuf], seed: Option<u64>, out: Option<&Path>, format: Option<Format>) -> Result<bool, Fatal> {
    let mut all_ok = true;
    let mut rows = Vec::new();
    for f in scenario_files(paths)? {
        match simulate(&f, seed)? {
            Ok(o) => {
                all_ok &= o.passed();
                if format != Some(Format::Json) {
                    println!("{}", verdict_line(&o));
                }
                rows.push(serde_json::to_value(summary(&o))?);
            }
            Err(msg) => {
                all_ok = false;
                println!("FAIL {}: {msg}", f.display());
                rows.push(serde_json::json!({ "scenario": f.display().to_string(), "passed": false, "error": msg }));
            }
        }
    }
    let doc = serde_json::to_string_pretty(&rows)?;
    if format == Some(Format::Json) {
        println!("{doc}");
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("check.json"), &doc)?;
    }
    if !all_ok {
        error!("some scenarios failed");
    }
    Ok(all_ok)
}

fn cmd_metrics(path: &Path, seed: Option<u64>, out: Option<&Path>, format: Format) -> Result<bool, Fatal> {
    let o = match simulate(path, seed)? {
        Ok(o) => o,
        Err(msg) => {
            println!("FAIL {}: {msg}", path.display());
            return Ok(false);
        }
    };
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            write_metrics(&o, dir, format)?;
        }
        None => {
            let stdout = io::stdout();
            match format {
                Format::Csv => o.metrics.write_csv(stdout.lock())?,
                Format::Json => writeln!(stdout.lock(), "{}", serde_json::to_string_pretty(&o.metrics)?)?,
            }
        }
    }
    Ok(o.passed())
}

fn cmd_vectors(out: Option<&Path>, format: Option<Format>) -> Result<bool, Fatal> {
    let results = edp::vectors::check();
    let ok = results.iter().all(|r| r.ok);
    let text = match format {
        Some(Format::Json) => serde_json::to_string_pretty(&results)? + "\n",
        Some(Format::Csv) => {
            let mut s = String::from("name,ok,expected,actual\n");
            for r in &results {
                s.push_str(&format!("{},{},{},{}\n", r.name, r.ok, r.expected, r.actual));
            }
            s
        }
        None => results
            .iter()
            .map(|r| format!("{} {} {}\n", if r.ok { "ok  " } else { "FAIL" }, r.name, r.actual))
            .collect(),
    };
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let ext = if format == Some(Format::Csv) { "csv" } else { "json" };
            let body = if format.is_none() { serde_json::to_string_pretty(&results)? } else { text.clone() };
            fs::write(dir.join(format!("vectors.{ext}")), body)?;
            print!("{text}");
        }
        None => print!("{text}"),
    }
    Ok(ok)
}
