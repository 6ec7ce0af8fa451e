use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use coral::HeadKind;

/// Rank-consistent ordinal regression: training, auditing and checks.
///
/// Every option can also be set through a `CORAL_*` environment variable
/// (shown in each option's help). Precedence is flags, then environment,
/// then the `--config` file, then built-in defaults.
///
/// Exit codes: 0 pass, 1 check failure, 2 usage or IO error.
#[derive(Debug, Parser)]
#[command(name = "coral", version)]
pub struct Cli {
    /// Log verbosity (-v info, -vv debug). RUST_LOG takes precedence.
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write log.jsonl, model.txt and report.json.
    Train(TrainArgs),
    /// Evaluate a saved model and print its report as JSON.
    Eval(EvalArgs),
    /// Inconsistency means over all, correct and incorrect predictions.
    Audit(EvalArgs),
    /// Compare analytic and finite-difference gradients on a random case.
    Gradcheck(GradcheckArgs),
    /// Check the cost-weighted error bound of a saved model.
    Bound(EvalArgs),
    /// Check that optimal bias units come out ordered on random instances.
    Theorem1(Theorem1Args),
    /// Export a synthetic dataset as CSV.
    GenData(GenDataArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// CSV file: feature columns then a 1-based integer rank.
    #[arg(long, env = "CORAL_DATASET", conflicts_with = "synthetic")]
    pub dataset: Option<PathBuf>,

    /// Treat the first CSV row as a header.
    #[arg(long, env = "CORAL_HEADER")]
    pub header: bool,

    /// Use the synthetic latent-score generator.
    #[arg(long, env = "CORAL_SYNTHETIC")]
    pub synthetic: bool,

    /// Number of ranks K.
    #[arg(long, env = "CORAL_RANKS")]
    pub ranks: Option<usize>,

    /// Synthetic example count.
    #[arg(long, env = "CORAL_N")]
    pub n: Option<usize>,

    /// Synthetic feature dimension.
    #[arg(long, env = "CORAL_DIM")]
    pub dim: Option<usize>,

    /// Synthetic latent noise standard deviation.
    #[arg(long, env = "CORAL_NOISE")]
    pub noise: Option<f64>,

    /// Synthetic generator seed.
    #[arg(long, env = "CORAL_DATA_SEED")]
    pub data_seed: Option<u64>,

    /// Train,validation,test fractions, e.g. 0.7,0.1,0.2.
    #[arg(long, env = "CORAL_SPLIT", value_delimiter = ',', num_args = 3)]
    pub split: Option<Vec<f64>>,

    /// Seed of the split shuffle.
    #[arg(long, env = "CORAL_SPLIT_SEED")]
    pub split_seed: Option<u64>,

    /// TOML file with defaults for any of these options.
    #[arg(long, env = "CORAL_CONFIG")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[arg(long, env = "CORAL_HEAD")]
    pub head: Option<HeadKind>,

    /// Hidden layer widths, e.g. 32,16.
    #[arg(long, env = "CORAL_HIDDEN", value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,

    #[arg(long, env = "CORAL_EPOCHS")]
    pub epochs: Option<usize>,

    #[arg(long, env = "CORAL_BATCH_SIZE")]
    pub batch_size: Option<usize>,

    #[arg(long, env = "CORAL_LR")]
    pub lr: Option<f64>,

    /// Seeds weight initialization and shuffling.
    #[arg(long, env = "CORAL_SEED")]
    pub seed: Option<u64>,

    /// Task weights: "uniform" or a file with K-1 positive numbers.
    #[arg(long, env = "CORAL_LAMBDA")]
    pub lambda: Option<String>,

    /// Cost matrix for the test report: classification, absolute or a path.
    /// Repeatable.
    #[arg(long = "cost", env = "CORAL_COST", value_delimiter = ',')]
    pub costs: Vec<String>,

    /// Step on the summed batch loss instead of the per-example mean.
    #[arg(long, env = "CORAL_SUM_LOSS")]
    pub sum_loss: bool,

    /// Skip feature standardization.
    #[arg(long, env = "CORAL_NO_STANDARDIZE")]
    pub no_standardize: bool,

    /// Output directory.
    #[arg(long, env = "CORAL_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Part {
    All,
    Train,
    Validation,
    Test,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model file written by `train`.
    #[arg(long, env = "CORAL_MODEL")]
    pub model: PathBuf,

    #[command(flatten)]
    pub data: DataArgs,

    /// Which part of the split to evaluate.
    #[arg(long, value_enum, default_value = "test", env = "CORAL_PART")]
    pub part: Part,

    /// Cost matrix: classification, absolute or a path. Repeatable.
    #[arg(long = "cost", env = "CORAL_COST", value_delimiter = ',')]
    pub costs: Vec<String>,

    /// Also write the JSON report to this file.
    #[arg(long, env = "CORAL_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, env = "CORAL_HEAD", default_value = "coral")]
    pub head: HeadKind,

    #[arg(long, env = "CORAL_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Number of consecutive seeds to check.
    #[arg(long, default_value_t = 1)]
    pub cases: u64,

    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,

    #[arg(long, default_value_t = 1e-6)]
    pub step: f64,
}

#[derive(Debug, Args)]
pub struct Theorem1Args {
    #[arg(long, default_value_t = 100)]
    pub trials: usize,

    #[arg(long, env = "CORAL_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Allowed `b_(k+1) - b_k`.
    #[arg(long, default_value_t = 1e-9)]
    pub slack: f64,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// CSV destination.
    #[arg(long, env = "CORAL_OUT")]
    pub out: PathBuf,
}
