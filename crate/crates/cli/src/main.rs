//! `synthgrad` command-line interface.

mod analyze;
mod config;
mod experiment;
mod fetch;
mod report;
mod theory;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Failures that map to dedicated exit codes.
#[derive(Debug)]
pub enum Failure {
    /// Invalid configuration or arguments (exit 2).
    Config(String),
    /// The experiment ran but its verdict failed (exit 3).
    Verdict(String),
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "invalid configuration: {m}"),
            Failure::Verdict(m) => write!(f, "verdict failed: {m}"),
        }
    }
}

impl std::error::Error for Failure {}

#[derive(Parser)]
#[command(name = "synthgrad", version, about = "Synthetic-gradient training experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an artificial dataset and write it as CSV.
    GenData(GenDataArgs),
    /// Run the experiment described by a TOML config file.
    #[command(alias = "run")]
    Train(TrainArgs),
    /// Simulate the linear-regression / linear-SG dynamical system.
    Theorem1(theory::Theorem1Args),
    /// Run the constant-SG counterexample on L = Σ|a x + b|.
    CriticalPoint(theory::CriticalPointArgs),
    /// Re-run an analysis on a trained variant's checkpoint.
    Analyze(analyze::AnalyzeArgs),
    /// Summarise finished runs under a directory.
    Report(report::ReportArgs),
    /// Download the MNIST IDX files.
    FetchMnist(fetch::FetchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Linear,
    Noisy,
    Random,
    /// 2-D lattice labelled by a noisy hyperplane.
    GridNoisy,
    /// 2-D lattice with fair-coin labels.
    GridRandom,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, value_enum)]
    kind: GenKind,
    /// Input dimension (ignored for grids).
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Grid points per axis.
    #[arg(long, default_value_t = 20)]
    resolution: usize,
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    lo: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    hi: f64,
    /// Label-noise rate of `grid-noisy`.
    #[arg(long, default_value_t = 0.1)]
    noise_rate: f64,
}

#[derive(Args)]
struct TrainArgs {
    config: PathBuf,
    /// Override a config value, e.g. `--set train.iterations=500`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Output root (default: the config's `output`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Pause every variant after this many iterations; a later run resumes
    /// from the checkpoints.
    #[arg(long)]
    stop_after: Option<usize>,
    /// Worker threads (default: available cores).
    #[arg(long)]
    jobs: Option<usize>,
}

fn gen_data(args: &GenDataArgs) -> Result<()> {
    use synthgrad::data::{generate, grid_2d, DatasetKind, Labeler};
    let data = match args.kind {
        GenKind::Linear => generate(DatasetKind::Linear, args.k, args.seed)?,
        GenKind::Noisy => generate(DatasetKind::Noisy, args.k, args.seed)?,
        GenKind::Random => generate(DatasetKind::Random, args.k, args.seed)?,
        GenKind::GridNoisy | GenKind::GridRandom => {
            let labeler = match args.kind {
                GenKind::GridNoisy => Labeler::LinearWithNoise { rate: args.noise_rate },
                _ => Labeler::Random,
            };
            grid_2d(args.resolution, (args.lo, args.hi), labeler, args.seed)?.data
        }
    };
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    data.write_csv(&args.out)?;
    println!("n={} d={} class_counts={:?}", data.len(), data.dim(), data.class_counts());
    Ok(())
}

fn train(args: &TrainArgs) -> Result<()> {
    let mut overrides = args.overrides.clone();
    if let Some(it) = args.iterations {
        overrides.push(format!("train.iterations={it}"));
    }
    if let Some(s) = args.seed {
        overrides.push(format!("seeds=[{s}]"));
    }
    if let Some(out) = &args.out {
        overrides.push(format!("output={}", toml::Value::String(out.display().to_string())));
    }
    let cfg = config::load(&args.config, &overrides).map_err(|e| Failure::Config(format!("{e:#}")))?;
    let opts = experiment::RunOptions {
        stop_after: args.stop_after,
        jobs: args.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())),
    };
    experiment::run(&cfg, &opts)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Theorem1(a) => theory::theorem1_cmd(a),
        Command::CriticalPoint(a) => theory::critical_point_cmd(a),
        Command::Analyze(a) => analyze::analyze_cmd(a),
        Command::Report(a) => report::report_cmd(a),
        Command::FetchMnist(a) => fetch::fetch_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Failure>() {
                Some(Failure::Config(_)) => ExitCode::from(2),
                Some(Failure::Verdict(_)) => ExitCode::from(3),
                None => ExitCode::from(1),
            }
        }
    }
}
