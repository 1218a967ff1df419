use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use probeset::synthetic::Task;
use probeset::{Method, SetFamily};

mod commands;

/// Calibrated probe-adapted predictive sets from partially labeled data.
#[derive(Debug, Parser)]
#[command(name = "probeset", version)]
struct Cli {
    /// Worker threads for generation, calibration and Monte-Carlo trials.
    /// Defaults to one per core.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset as JSONL, with a `.meta.json` sidecar.
    Gen(GenArgs),
    /// Calibrate a predictive-set parameter on a dataset.
    Calibrate(CalibrateArgs),
    /// Evaluate a calibration outcome on a test dataset.
    Evaluate(EvaluateArgs),
    /// Run generation, calibration and evaluation over a parameter grid.
    Sweep(SweepArgs),
    /// Run the brute-force and Monte-Carlo self-check suite.
    Selfcheck(SelfcheckArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Generator config as JSON. Flags given alongside override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub task: Option<Task>,
    /// Number of examples.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Items per ranking instance.
    #[arg(long)]
    pub k: Option<u32>,
    /// Relevances are drawn as `scale * Exp(1)`.
    #[arg(long)]
    pub relevance_scale: Option<f64>,
    /// Standard deviation of the score noise.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Inverse temperature of the ranking distribution.
    #[arg(long)]
    pub sharpness: Option<f64>,
    /// Leaves of the label tree.
    #[arg(long)]
    pub leaves: Option<usize>,
    /// Use a balanced tree with this branching factor instead of a random hierarchy.
    #[arg(long)]
    pub branching: Option<usize>,
    /// Output JSONL file; stdout when absent. The sidecar is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(after_help = "For the bernoulli family, --delta is the tolerated loss; \
the adaptive sets target an accuracy of 1 - delta.")]
pub struct CalibrateArgs {
    #[arg(long, value_parser = parse_method)]
    pub method: Method,
    #[arg(long, value_parser = parse_family, default_value = "threshold")]
    pub family: SetFamily,
    /// Quantile level: the loss should stay within delta with probability 1 - alpha.
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// Loss threshold.
    #[arg(long)]
    pub delta: f64,
    /// Step-up offset; defaults to 1e-6 times the score span.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Error level of the fixed-sequence tests.
    #[arg(long, default_value_t = 0.1)]
    pub alpha_fst: f64,
    /// Evenly spaced grid points for fixed-sequence testing.
    #[arg(long, default_value_t = 100)]
    pub grid_size: usize,
    /// Calibration JSONL.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Outcome JSON; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Outcome JSON written by `calibrate`.
    #[arg(long)]
    pub outcome: PathBuf,
    /// Test JSONL.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Level of the reported loss quantile; defaults to the outcome's alpha.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Report file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV of the empirical CDF of per-example losses.
    #[arg(long)]
    pub ecdf_out: Option<PathBuf>,
    /// CSV of the empirical CDF of per-example abstentions.
    #[arg(long)]
    pub abstention_ecdf_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Sweep config as JSON.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in method comparison grid for a task.
    #[arg(long)]
    pub preset: Option<Task>,
    /// Number of seeds for the preset.
    #[arg(long, default_value_t = 10)]
    pub seeds: usize,
    /// Offset added to every seed of the sweep.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Per-cell rows; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-(alpha, delta, method, family) summaries with interquartile ranges.
    #[arg(long)]
    pub summary_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SelfcheckArgs {
    /// Monte-Carlo trials per guarantee check (at least 100).
    #[arg(long, default_value_t = 500)]
    pub trials: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Shift the step-down quantile rank down by one, to confirm the suite notices.
    #[arg(long, hide = true)]
    pub inject_quantile_off_by_one: bool,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|_| "expected one of stepdown, stepup, fst, fst-quantile, nominal".to_string())
}

fn parse_family(s: &str) -> Result<SetFamily, String> {
    s.parse().map_err(|_| "expected threshold or bernoulli".to_string())
}

/// A failed command and its exit status.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags or parameter values.
    Usage(String),
    /// Unreadable, malformed or incompatible input.
    Data(String),
    /// A self-check guarantee did not hold.
    Guarantee(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Data(_) => 3,
            Failure::Guarantee(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Guarantee(m) => m,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Gen(a) => commands::gen(&a),
        Command::Calibrate(a) => commands::calibrate(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Selfcheck(a) => commands::selfcheck(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
