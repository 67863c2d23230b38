//! `dicke`: runs one experiment from a JSON config and writes its outputs
//! plus a checksummed manifest.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid configuration.

mod config;
mod manifest;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use chrono::{SecondsFormat, Utc};
use clap::{Args, Parser, Subcommand};
use dicke_core::sweep::{Workers, WORKERS_ENV};

use config::{ConfigError, Experiment, Overrides, Plan};
use manifest::{artifact, ErrorRecord, RunManifest, Status};

#[derive(Parser)]
#[command(name = "dicke", version, about = "Classical Dicke model experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory.
    Simulate(RunArgs),
    /// Equilibria, eigenvalues and stability over a coupling grid.
    Equilibria(RunArgs),
    /// Ground-state energy and observables over a coupling grid.
    Gspt(RunArgs),
    /// Mean largest Lyapunov exponent over an energy-coupling grid.
    LyapunovMap(RunArgs),
    /// Largest Lyapunov exponent over the (Q, P) plane at fixed energy.
    QpMap(RunArgs),
    /// Lyapunov exponent from a sampled time series.
    Rosenstein(RunArgs),
    /// Ensemble variance growth and its comparison with the mean exponent.
    Otoc(RunArgs),
    /// Noise probe of the origin across the coupling.
    Esqpt(RunArgs),
    /// Check the checksums recorded in a run directory.
    Verify {
        /// Directory containing manifest.json.
        dir: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Worker threads, or "auto".
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<Workers>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Validate and print the planned work without computing.
    #[arg(long)]
    dry_run: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = match cli.command {
        Command::Simulate(a) => (Experiment::Simulate, a),
        Command::Equilibria(a) => (Experiment::Equilibria, a),
        Command::Gspt(a) => (Experiment::Gspt, a),
        Command::LyapunovMap(a) => (Experiment::LyapunovMap, a),
        Command::QpMap(a) => (Experiment::QpMap, a),
        Command::Rosenstein(a) => (Experiment::Rosenstein, a),
        Command::Otoc(a) => (Experiment::Otoc, a),
        Command::Esqpt(a) => (Experiment::Esqpt, a),
        Command::Verify { dir } => return verify(&dir),
    };
    let overrides = Overrides {
        workers: args.workers,
        seed: args.seed,
        out: args.out,
    };
    let plan = match config::load(&args.config, experiment, &overrides) {
        Ok(p) => p,
        Err(ConfigError(msg)) => {
            eprintln!("error: invalid config: {msg}");
            return ExitCode::from(2);
        }
    };
    if args.dry_run {
        println!("experiment: {}", plan.experiment);
        println!("work items: {}", plan.work_items);
        println!("workers: {}", plan.workers.resolve());
        println!("output: {}", plan.out.display());
        return ExitCode::SUCCESS;
    }
    match run_plan(&plan) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn error_record(e: &anyhow::Error) -> ErrorRecord {
    let (item_index, completed) = match e.downcast_ref::<dicke_core::Error>() {
        Some(dicke_core::Error::WorkItem { index, completed, .. }) => (Some(*index), Some(*completed)),
        Some(dicke_core::Error::Trajectory { index, .. }) => (Some(*index), None),
        _ => (None, None),
    };
    ErrorRecord {
        message: format!("{e:#}"),
        chain: e.chain().map(|c| c.to_string()).collect(),
        item_index,
        completed,
    }
}

/// Runs the experiment, then writes artifacts and the manifest. Returns
/// whether the experiment succeeded.
fn run_plan(plan: &Plan) -> Result<bool> {
    let started = now();
    let result = run::execute(plan);
    std::fs::create_dir_all(&plan.out).with_context(|| format!("creating {}", plan.out.display()))?;
    let mut manifest = RunManifest {
        toolkit: "dicke".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        experiment: plan.experiment.to_string(),
        config: serde_json::to_value(&plan.config)?,
        seed: plan.seed,
        workers: plan.workers.resolve(),
        work_items: plan.work_items,
        started,
        finished: String::new(),
        status: Status::Ok,
        error: None,
        artifacts: Vec::new(),
        summary: Default::default(),
    };
    let ok = match result {
        Ok(outcome) => {
            for (name, bytes) in &outcome.artifacts {
                manifest::write_atomic(&plan.out, name, bytes)?;
                manifest.artifacts.push(artifact(name, bytes));
            }
            manifest.summary = outcome.summary;
            true
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            manifest.status = Status::Error;
            manifest.error = Some(error_record(&e));
            false
        }
    };
    manifest.finished = now();
    manifest.write(&plan.out)?;
    if ok {
        for a in &manifest.artifacts {
            println!("{}", plan.out.join(&a.path).display());
        }
    }
    Ok(ok)
}

fn verify(dir: &Path) -> ExitCode {
    let check = || -> Result<Vec<String>> {
        let text = std::fs::read_to_string(dir.join(manifest::MANIFEST)).context("reading manifest")?;
        let m: RunManifest = serde_json::from_str(&text).context("parsing manifest")?;
        m.verify(dir)
    };
    match check() {
        Ok(bad) if bad.is_empty() => {
            println!("ok");
            ExitCode::SUCCESS
        }
        Ok(bad) => {
            for b in bad {
                println!("checksum mismatch: {b}");
            }
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
