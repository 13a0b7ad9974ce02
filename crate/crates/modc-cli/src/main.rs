//! `modc`: single entry point for the pipeline — data generation, test-set
//! construction, policy simulation, mode discovery, and report emission.
//!
//! Exit codes: 0 success, 2 validation error, 3 empty result, 4 internal.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod manifest;

use config::{Globals, Overrides};

#[derive(Debug, Parser)]
#[command(name = "modc", version, about = "Mode-conditioned test-time compute lab")]
struct Cli {
    /// Master seed; the MODC_SEED environment variable overrides this flag.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all logical cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Optional key = value config file; flags win over file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Children kept per expansion (DFS) / frontier width (BFS).
    #[arg(long, global = true)]
    beam_width: Option<usize>,
    /// Search expansion budget per run.
    #[arg(long, global = true)]
    node_budget: Option<usize>,
    /// Heuristic score-noise magnitude.
    #[arg(long, global = true)]
    noise_scale: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rejection-sample a training set of solved search trajectories.
    GenData(GenDataArgs),
    /// Build the natural and adversarial test sets from a training set.
    BuildTestsets(BuildTestsetsArgs),
    /// Estimate pass@k curves for sampling policies over a test set.
    Simulate(SimulateArgs),
    /// Emit per-problem BFS-fraction balance histograms.
    Histogram(HistogramArgs),
    /// Cluster per-example gradients into mode annotations.
    DiscoverModes(DiscoverModesArgs),
    /// Score existing mode annotations against a truth field.
    EvalF1(EvalF1Args),
    /// Join curve CSVs into a gap table and markdown summary.
    Report(ReportArgs),
}

#[derive(Debug, clap::Args)]
struct GenDataArgs {
    /// Number of kept (solved) trajectories.
    #[arg(long)]
    n: usize,
    /// uniform | balanced
    #[arg(long, default_value = "uniform")]
    mode_sampling: String,
    /// Output JSONL path; stats land next to it as <stem>.stats.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, clap::Args)]
struct BuildTestsetsArgs {
    /// Training set JSONL (defines "unseen").
    #[arg(long)]
    train: PathBuf,
    /// Natural test-set size.
    #[arg(long, default_value_t = 500)]
    natural: usize,
    /// Fresh candidate-pool size for the adversarial filter.
    #[arg(long, default_value_t = 2000)]
    adversarial_pool: usize,
    /// Success-rate threshold of the adversarial filter.
    #[arg(long, default_value_t = modc::datagen::DEFAULT_ADVERSARIAL_THRESHOLD)]
    threshold: f64,
    /// Seeded runs per mode when profiling a candidate.
    #[arg(long, default_value_t = modc::datagen::DEFAULT_PROFILE_RUNS)]
    runs: usize,
    /// Require test targets to be absent from training targets.
    #[arg(long)]
    disjoint_targets: bool,
    /// Directory receiving natural.jsonl, adversarial.jsonl, profiles.jsonl.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, clap::Args)]
struct SimulateArgs {
    /// Test-set JSONL of problems.
    #[arg(long)]
    testset: PathBuf,
    /// Label recorded in the curves (default: test-set file stem).
    #[arg(long)]
    testset_label: Option<String>,
    /// Policy spec, repeatable: modc-separate | standard[:DIST] |
    /// modc-prefix:F | random-partition | modc-clusters | modc-truth.
    #[arg(long = "policy", required = true)]
    policy: Vec<String>,
    /// Largest k; curves run over powers of two up to it.
    #[arg(long, default_value_t = 64)]
    k_max: u64,
    /// Trajectories drawn per problem (must be >= k-max).
    #[arg(long, default_value_t = 64)]
    samples: u64,
    /// Shorthand for k-max = 1024 with at least 1024 samples.
    #[arg(long)]
    deep: bool,
    /// Annotated training JSONL, needed by modc-clusters / modc-truth.
    #[arg(long)]
    annotated: Option<PathBuf>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, clap::Args)]
struct HistogramArgs {
    #[arg(long)]
    testset: PathBuf,
    #[arg(long = "policy", required = true)]
    policy: Vec<String>,
    /// Samples per batch.
    #[arg(long, default_value_t = 16)]
    k: u64,
    /// Batches per problem.
    #[arg(long, default_value_t = 1)]
    batches: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, clap::Args)]
struct DiscoverModesArgs {
    /// Training JSONL with trace token arrays.
    #[arg(long)]
    train: PathBuf,
    #[arg(long, default_value_t = modc::discovery::DEFAULT_CLUSTERS)]
    clusters: usize,
    /// Rademacher projection dimension.
    #[arg(long, default_value_t = modc::discovery::DEFAULT_PROJECTION_DIM)]
    dim: usize,
    /// fitted | random-init
    #[arg(long, default_value = "fitted")]
    model: String,
    /// Annotated JSONL output; the F1 report lands next to it as <stem>.f1.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, clap::Args)]
struct EvalF1Args {
    /// Annotated JSONL with mode_cluster fields.
    #[arg(long)]
    annotated: PathBuf,
    /// Field holding the ground-truth mode label.
    #[arg(long, default_value = "mode")]
    truth_field: String,
    /// Report output path.
    #[arg(long, default_value = "f1_report.json")]
    out: PathBuf,
}

#[derive(Debug, clap::Args)]
struct ReportArgs {
    /// Curve CSVs to join (repeatable or space separated).
    #[arg(long = "curves", required = true, num_args = 1..)]
    curves: Vec<PathBuf>,
    /// Directory receiving gaps.csv and summary.md.
    #[arg(long, default_value = "reports")]
    out_dir: PathBuf,
}

/// Command failure, bucketed by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, malformed inputs, mis-set configuration (exit 2).
    Validation(String),
    /// The pipeline ran but produced nothing (exit 3).
    EmptyResult(String),
    /// Unexpected failure (exit 4).
    Internal(anyhow::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::EmptyResult(_) => 3,
            CliError::Internal(_) => 4,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Validation(m) | CliError::EmptyResult(m) => m.clone(),
            CliError::Internal(e) => format!("{e:#}"),
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let flags = Overrides {
        seed: cli.seed,
        jobs: cli.jobs,
        beam_width: cli.beam_width,
        node_budget: cli.node_budget,
        noise_scale: cli.noise_scale,
    };
    let globals = Globals::resolve(cli.config.as_deref(), &flags)
        .map_err(|e| CliError::Validation(format!("{e:#}")))?;

    #[cfg(feature = "parallel")]
    if let Some(jobs) = globals.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Internal(e.into()))?;
    }

    match &cli.command {
        Command::GenData(args) => commands::gen_data(&globals, args),
        Command::BuildTestsets(args) => commands::build_testsets(&globals, args),
        Command::Simulate(args) => commands::simulate(&globals, args),
        Command::Histogram(args) => commands::histogram(&globals, args),
        Command::DiscoverModes(args) => commands::discover_modes(&globals, args),
        Command::EvalF1(args) => commands::eval_f1(&globals, args),
        Command::Report(args) => commands::report(&globals, args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code())
        }
    }
}
