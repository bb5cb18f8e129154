mod commands;
mod output;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicU8, Ordering};

use clap::{Args, Parser, Subcommand};

static VERBOSITY: AtomicU8 = AtomicU8::new(1);

/// Progress message on stderr, shown at verbosity `level` or above.
pub fn note(level: u8, msg: impl AsRef<str>) {
    if VERBOSITY.load(Ordering::Relaxed) >= level {
        eprintln!("{}", msg.as_ref());
    }
}

#[derive(Parser)]
#[command(name = "argrl", version, about = "Build short ancestral recombination graphs with reinforcement learning")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args)]
pub struct Global {
    /// Flat key=value config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run seed; every random stream is derived from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, owned by this run.
    #[arg(long, short, global = true)]
    pub out: Option<PathBuf>,
    /// More progress output (repeatable).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Only errors on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

#[derive(Subcommand)]
pub enum Command {
    /// Simulate samples under the coalescent with recombination.
    Simulate(SimulateArgs),
    /// Exact optimum, optimal-ARG count and optimal event logs of small samples.
    SolveTabular(SolveArgs),
    /// Train a value network on one sample or on a sequence pool.
    Train(TrainArgs),
    /// Greedy builds of one or more checkpoints on a sample suite.
    Evaluate(EvaluateArgs),
    /// Pick the checkpoint with fewest infinite builds, then shortest mean.
    Select(SelectArgs),
    /// Combine checkpoints with the mean, majority or minimum scheme.
    Ensemble(EnsembleArgs),
    /// Run the ARG4WG heuristic.
    Baseline(BaselineArgs),
    /// Compare greedy model builds with the heuristic, per sample and group.
    Compare(CompareArgs),
    /// Write a genealogy as a Graphviz DOT file.
    ExportDot(ExportDotArgs),
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Sequences per sample.
    #[arg(long)]
    pub n: Option<usize>,
    /// Region length in base pairs.
    #[arg(long)]
    pub region_bp: Option<f64>,
    /// Effective population size.
    #[arg(long)]
    pub ne: Option<f64>,
    /// Mutation rate per site per generation.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Recombination rate per site per generation.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Leading SNPs kept.
    #[arg(long)]
    pub snps: Option<usize>,
    /// Number of samples.
    #[arg(long)]
    pub count: Option<usize>,
    /// Resimulation attempts when too few SNPs segregate.
    #[arg(long)]
    pub attempts: Option<usize>,
}

#[derive(Args)]
pub struct SolveArgs {
    /// Sample file(s) or directories.
    #[arg(long = "sample", required = false)]
    pub samples: Vec<PathBuf>,
    /// Explore the full reachable closure instead of a bounded region.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub full: Option<bool>,
    /// Extra events explored beyond the optimum (bounded exploration).
    #[arg(long)]
    pub slack: Option<usize>,
    /// Largest number of states explored.
    #[arg(long)]
    pub node_cap: Option<usize>,
    /// Value iteration convergence threshold.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Write every optimal event log.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub event_logs: Option<bool>,
    /// Largest number of optimal event logs written per sample.
    #[arg(long)]
    pub log_limit: Option<usize>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// fixed or generalize.
    #[arg(long)]
    pub mode: Option<String>,
    /// Training sample (fixed mode).
    #[arg(long)]
    pub sample: Option<PathBuf>,
    /// Sequence pool (generalize mode); repeated sequences are kept.
    #[arg(long)]
    pub pool: Option<PathBuf>,
    /// Validation samples; every checkpoint is evaluated on them.
    #[arg(long)]
    pub validation: Vec<PathBuf>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Sequences per initial state (generalize mode).
    #[arg(long)]
    pub n_tr: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    #[arg(long)]
    pub checkpoint_start: Option<usize>,
    /// Per-episode action cap (default 10 x sequences x markers).
    #[arg(long)]
    pub step_max_train: Option<usize>,
    /// Step cap of validation builds.
    #[arg(long)]
    pub step_max: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Block width of the feature encoder.
    #[arg(long)]
    pub block: Option<usize>,
    /// Step between block positions.
    #[arg(long)]
    pub shift: Option<usize>,
    /// Moving-average window of the training curve.
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Checkpoint files or directories of checkpoints.
    #[arg(long = "model")]
    pub models: Vec<PathBuf>,
    /// Sample files or directories.
    #[arg(long)]
    pub samples: Vec<PathBuf>,
    #[arg(long)]
    pub step_max: Option<usize>,
}

#[derive(Args)]
pub struct SelectArgs {
    /// Checkpoint files or directories of checkpoints.
    #[arg(long)]
    pub checkpoints: Vec<PathBuf>,
    /// Validation sample files or directories.
    #[arg(long)]
    pub validation: Vec<PathBuf>,
    #[arg(long)]
    pub step_max: Option<usize>,
}

#[derive(Args)]
pub struct EnsembleArgs {
    /// File listing member checkpoint paths, one per line.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Sample files or directories.
    #[arg(long)]
    pub samples: Vec<PathBuf>,
    #[arg(long)]
    pub step_max: Option<usize>,
    /// mean, majority, minimum or all.
    #[arg(long)]
    pub scheme: Option<String>,
    /// Random member orderings for the minimum-ensemble curve (0: none).
    #[arg(long)]
    pub orderings: Option<usize>,
}

#[derive(Args)]
pub struct BaselineArgs {
    /// Sample files or directories.
    #[arg(long = "sample")]
    pub samples: Vec<PathBuf>,
    /// random (one genealogy) or all (every tie branch).
    #[arg(long)]
    pub tie_rule: Option<String>,
    /// Largest number of genealogies enumerated per sample.
    #[arg(long)]
    pub branch_cap: Option<usize>,
    /// Checkpoint whose greedy builds are compared with the heuristic.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub step_max: Option<usize>,
}

#[derive(Args)]
pub struct CompareArgs {
    /// Checkpoint; alternatively one checkpoint per sample via --models-dir.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Directory holding `<sample id>.ckpt` per sample.
    #[arg(long)]
    pub models_dir: Option<PathBuf>,
    /// Sample files or directories.
    #[arg(long)]
    pub samples: Vec<PathBuf>,
    #[arg(long)]
    pub step_max: Option<usize>,
    /// Metadata keys forming the summary groups, comma separated.
    #[arg(long)]
    pub group_by: Option<String>,
}

#[derive(Args)]
pub struct ExportDotArgs {
    /// Initial sample of the genealogy.
    #[arg(long)]
    pub sample: Option<PathBuf>,
    /// Event log to render.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Render the greedy build of this checkpoint instead.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Render the heuristic's genealogy instead.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub baseline: Option<bool>,
    #[arg(long)]
    pub step_max: Option<usize>,
    /// Graph name and output file stem.
    #[arg(long)]
    pub name: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.global.quiet { 0 } else { 1 + cli.global.verbose };
    VERBOSITY.store(level, Ordering::Relaxed);
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
