//! Command-line front end: experiment configuration, reproducible runs, and
//! CSV/JSON artifact emission.
//!
//! Exit codes: 0 on success, 1 on configuration or runtime errors, 2 when an
//! experiment's verification checks fail.

mod config;
mod emit;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::{ExperimentConfig, ExperimentKind};

const OUT_DIR_ENV: &str = "ADRATE_OUT";

#[derive(Parser)]
#[command(
    name = "adrate",
    about = "Simulation and rate optimization for adaptively decoded coherent-state links",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (TOML, JSON, or an emitted run manifest).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; falls back to the config, then $ADRATE_OUT, then "runs".
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for parallel searches (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Report channel parameters, occupation, and classification.
    ChannelInfo(RunArgs),
    /// Optimize the single-mode decoder rate.
    RateSd(RunArgs),
    /// Optimize the adaptive decoder rate at small mode counts.
    RateAd(RunArgs),
    /// Verify adaptive decoding instances against the single-mode optimum.
    TheoremCheck(RunArgs),
    /// Low-energy scaling study for displaced on/off detection.
    KennedyScaling(RunArgs),
    /// Cross-check the decoder simulation against the feedback picture.
    PictureEquivalence(RunArgs),
    /// Validate a configuration without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    let (kind, args) = match cli.command {
        Command::ChannelInfo(args) => (ExperimentKind::ChannelInfo, args),
        Command::RateSd(args) => (ExperimentKind::RateSd, args),
        Command::RateAd(args) => (ExperimentKind::RateAd, args),
        Command::TheoremCheck(args) => (ExperimentKind::TheoremCheck, args),
        Command::KennedyScaling(args) => (ExperimentKind::KennedyScaling, args),
        Command::PictureEquivalence(args) => (ExperimentKind::PictureEquivalence, args),
        Command::Validate { config } => {
            let config = ExperimentConfig::load(&config)?;
            let violations = config.validate();
            if violations.is_empty() {
                println!("configuration is valid ({})", config.kind.name());
                return Ok(ExitCode::SUCCESS);
            }
            println!("{} violation(s):", violations.len());
            for v in &violations {
                println!("  - {v}");
            }
            return Ok(ExitCode::from(1));
        }
    };

    let config = ExperimentConfig::load(&args.config)?;
    if config.kind != kind {
        anyhow::bail!(
            "config kind is '{}' but the subcommand expects '{}'",
            config.kind.name(),
            kind.name()
        );
    }
    let violations = config.validate();
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("config violation: {v}");
        }
        anyhow::bail!("configuration is invalid ({} violation(s))", violations.len());
    }

    let seed = args.seed.or(config.seed).unwrap_or(0);
    let out_dir = args
        .out
        .or_else(|| config.output.as_ref().and_then(|o| o.dir.clone()).map(PathBuf::from))
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));

    let started = Instant::now();
    let run_once = || runner::run(&config, seed, &out_dir);
    let outcome = match args.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .context("cannot build the worker pool")?;
            pool.install(run_once)?
        }
        None => run_once()?,
    };
    let wall = started.elapsed().as_secs_f64();

    let manifest = json!({
        "experiment": config.kind.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "wall_time_s": wall,
        "science_ok": outcome.science_ok,
        "outputs": outcome
            .outputs
            .iter()
            .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
            .collect::<Vec<_>>(),
        "summary": outcome.summary,
        "config": config,
    });
    let manifest_path = emit::write_json(&out_dir, "manifest.json", &manifest)?;

    println!(
        "{}: {} ({} artifact(s) in {}, {:.2}s)",
        config.kind.name(),
        if outcome.science_ok { "ok" } else { "VERIFICATION FAILED" },
        outcome.outputs.len() + 1,
        out_dir.display(),
        wall
    );
    let _ = manifest_path;
    Ok(if outcome.science_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}
