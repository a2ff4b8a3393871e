use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use spikegrad::experiment::{self, ExperimentConfig, ExperimentKind};
use spikegrad::grad::Engine;

/// Run spiking-network gradient experiments and write CSV + JSON reports.
#[derive(Debug, Parser)]
#[command(name = "spikegrad", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON experiment config; defaults for the subcommand are used otherwise.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (default: runs/<experiment>-<run id>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Backward engine; repeat to select several.
    #[arg(long = "engine", global = true, value_parser = parse_engine)]
    engines: Vec<Engine>,

    /// Surrogate gradient scale; repeat for a sweep.
    #[arg(long = "scale", global = true)]
    scales: Vec<f64>,

    #[arg(long, global = true)]
    epochs: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Fit a target spike train from Poisson input.
    PoissonFit,
    /// Per-layer gradient norms of each engine across surrogate scales.
    GradCompare,
    /// Time forward and backward passes across sequence lengths.
    Bench,
    /// Dense Jacobian and reset-product checks on random instances.
    IftCheck,
}

impl Command {
    fn kind(self) -> ExperimentKind {
        match self {
            Command::PoissonFit => ExperimentKind::PoissonFit,
            Command::GradCompare => ExperimentKind::GradCompare,
            Command::Bench => ExperimentKind::Bench,
            Command::IftCheck => ExperimentKind::IftCheck,
        }
    }
}

fn parse_engine(s: &str) -> Result<Engine, String> {
    s.parse().map_err(|e: spikegrad::Error| e.to_string())
}

fn build_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let kind = cli.command.kind();
    let mut cfg = match &cli.config {
        Some(path) => {
            let cfg = ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?;
            if cfg.experiment != kind {
                bail!("config is for {}, not {}", cfg.experiment.name(), kind.name());
            }
            cfg
        }
        None => ExperimentConfig::defaults(kind),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(epochs) = cli.epochs {
        cfg.epochs = epochs;
    }
    if !cli.engines.is_empty() {
        cfg.engines = cli.engines.clone();
    }
    if !cli.scales.is_empty() {
        cfg.scales = cli.scales.clone();
    }
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cfg = match build_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e:#}");
            return ExitCode::from(1);
        }
    };
    match run(&cfg) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cfg: &ExperimentConfig) -> anyhow::Result<bool> {
    let output = experiment::run(cfg)?;
    let dir = match &cfg.out {
        Some(dir) => dir.clone(),
        None => PathBuf::from("runs").join(format!("{}-{}", cfg.experiment.name(), cfg.run_id()?)),
    };
    let summary = experiment::write_run(&dir, cfg, &output)?;
    println!(
        "{} run {}: {} -> {}",
        cfg.experiment.name(),
        summary.run_id,
        if summary.passed { "ok" } else { "CHECKS FAILED" },
        dir.display()
    );
    if !summary.passed {
        eprintln!("{}", serde_json::to_string_pretty(&summary.metrics)?);
    }
    Ok(summary.passed)
}
