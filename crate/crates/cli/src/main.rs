use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod experiment;

/// Transform LoRA adapters between ranks, plan rank-annealing schedules and
/// report retention and FLOP costs.
#[derive(Debug, Parser)]
#[command(name = "lora-squeeze", version, propagate_version = true)]
pub struct Cli {
    /// Worker threads for per-tensor work. Defaults to the number of logical
    /// cores. Results do not depend on this value.
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Squeeze every tensor of a checkpoint to a lower rank.
    Squeeze(SqueezeArgs),
    /// Raise every tensor of a checkpoint to a higher rank without changing
    /// any product.
    Expand(ExpandArgs),
    /// Report how much singular energy survives truncation to each rank.
    Analyze(AnalyzeArgs),
    /// Plan a rank-annealing schedule.
    Plan(PlanArgs),
    /// Estimate the FLOP cost of each squeeze backend.
    Flops(FlopsArgs),
    /// Run a toy rank-annealing experiment from a descriptor file.
    Experiment(ExperimentArgs),
    /// Print the metadata and tensor table of a checkpoint.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// Exact SVD of the reconstructed update.
    Full,
    /// Randomized SVD of the reconstructed update.
    Rsvd,
    /// Exact SVD of the small core matrix; never forms the full update.
    Efficient,
}

#[derive(Debug, Args)]
pub struct SqueezeArgs {
    /// Source checkpoint directory.
    #[arg(long, value_name = "DIR")]
    pub input: PathBuf,
    /// Destination checkpoint directory. Replaced if it exists.
    #[arg(long, value_name = "DIR")]
    pub output: PathBuf,
    /// Target rank.
    #[arg(long, value_name = "R", value_parser = clap::value_parser!(u32).range(1..))]
    pub rank: u32,
    /// Decomposition backend.
    #[arg(long, value_enum, default_value_t = Method::Efficient)]
    pub method: Method,
    /// Base seed for randomized backends; each tensor derives its own seed
    /// from this and its name.
    #[arg(
        long,
        value_name = "S",
        env = "LORA_SQUEEZE_SEED",
        default_value_t = 42
    )]
    pub seed: u64,
    /// Extra sketch columns for the randomized backend.
    #[arg(long, value_name = "K", default_value_t = 10)]
    pub oversampling: usize,
    /// Power iterations for the randomized backend.
    #[arg(long, value_name = "Q", default_value_t = 2)]
    pub power_iters: usize,
    /// Write the per-tensor report here as JSON.
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExpandArgs {
    /// Source checkpoint directory.
    #[arg(long, value_name = "DIR")]
    pub input: PathBuf,
    /// Destination checkpoint directory. Replaced if it exists.
    #[arg(long, value_name = "DIR")]
    pub output: PathBuf,
    /// Target rank, at least the current rank of every tensor.
    #[arg(long, value_name = "R", value_parser = clap::value_parser!(u32).range(1..))]
    pub rank: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    /// Comma-separated table.
    Csv,
    /// Pretty-printed JSON.
    Structured,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Checkpoint directory.
    #[arg(long, value_name = "DIR")]
    pub input: PathBuf,
    /// Comma-separated target ranks, or `all-halvings` for the halving
    /// ladder from the source rank down to 1.
    #[arg(long, value_name = "LIST", default_value = "all-halvings")]
    pub ranks: String,
    /// Mean retention below this value flags the rank.
    #[arg(long, value_name = "T", default_value_t = 0.80)]
    pub threshold: f64,
    /// Output format.
    #[arg(long, value_enum, default_value_t = ReportFormat::Csv)]
    pub format: ReportFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlanScheme {
    /// Steps proportional to rank.
    Standard,
    /// A per-stage floor, then steps proportional to rank.
    MinSteps,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Rank of the first stage.
    #[arg(long, value_name = "R", value_parser = clap::value_parser!(u32).range(1..))]
    pub start_rank: u32,
    /// Rank of the last stage.
    #[arg(long, value_name = "R", value_parser = clap::value_parser!(u32).range(1..))]
    pub end_rank: u32,
    /// Training steps to distribute over the stages.
    #[arg(long, value_name = "STEPS")]
    pub total_steps: u64,
    /// Allocation rule.
    #[arg(long, value_enum, default_value_t = PlanScheme::Standard)]
    pub scheme: PlanScheme,
    /// Per-stage floor for `min-steps`.
    #[arg(long, value_name = "STEPS", default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    pub min_steps: u64,
    /// Write the schedule here as JSON.
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FlopsArgs {
    /// Rows of the update matrix.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub m: u64,
    /// Columns of the update matrix.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    /// Rank of the adapter being squeezed.
    #[arg(long, value_name = "R", value_parser = clap::value_parser!(u64).range(1..))]
    pub source_rank: u64,
    /// Rank after squeezing; at most min(m, n).
    #[arg(long, value_name = "R", value_parser = clap::value_parser!(u64).range(1..))]
    pub target_rank: u64,
    /// Extra sketch columns for the randomized backend.
    #[arg(long, value_name = "K", default_value_t = 10)]
    pub oversampling: u64,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Experiment descriptor (JSON).
    #[arg(long, value_name = "PATH")]
    pub spec: PathBuf,
    /// Write the report here instead of standard output.
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Checkpoint directory.
    #[arg(long, value_name = "DIR")]
    pub input: PathBuf,
    /// Output format.
    #[arg(long, value_enum, default_value_t = InspectFormat::Text)]
    pub format: InspectFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InspectFormat {
    /// Human-readable summary.
    Text,
    /// Pretty-printed JSON.
    Structured,
}

/// A failure and the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Io(String),
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Io(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<lora_squeeze::Error> for CliError {
    fn from(e: lora_squeeze::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else if e.is_storage() {
            CliError::Io(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(feature = "parallel")]
fn run(cli: Cli) -> Result<(), CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        builder = builder.num_threads(n as usize);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Validation(format!("--threads: {e}")))?;
    pool.install(|| commands::dispatch(cli.command))
}

#[cfg(not(feature = "parallel"))]
fn run(cli: Cli) -> Result<(), CliError> {
    // Built without rayon: work is sequential whatever `--threads` says.
    let _ = cli.threads;
    commands::dispatch(cli.command)
}
