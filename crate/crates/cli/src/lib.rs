//! `fex` command-line tool: data generation, predictor and explainer
//! training, explanation, the exhaustive oracle, evaluation and timing.

pub mod checkpoint;
pub mod commands;
mod config;
mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use config::ConfigFile;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "fex", version, about = "Amortized feature attribution for black-box classifiers")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GlobalArgs {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; falls back to FEX_THREADS, then all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON config file; explicit flags take precedence over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with known informative features.
    GenData(GenDataArgs),
    /// Train the built-in MLP classifier.
    TrainPredictor(TrainPredictorArgs),
    /// Train the explainer and value networks against a predictor.
    TrainExplainer(TrainExplainerArgs),
    /// Attribute inputs with one explainer forward pass each.
    Explain(ExplainArgs),
    /// Exhaustive empirical attribution over every non-empty mask.
    Oracle(OracleArgs),
    /// Masking-curve AUCs and ground-truth recovery.
    Eval(EvalArgs),
    /// Time explanations against Monte Carlo estimation.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Planted,
    TwoClassDisjoint,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenDataArgs {
    #[arg(long, value_enum, default_value = "planted")]
    pub task: Task,
    #[arg(long, default_value_t = 2000)]
    pub n_samples: usize,
    #[arg(long, default_value_t = 10)]
    pub n_features: usize,
    /// Planted features (planted task only).
    #[arg(long, default_value_t = 1)]
    pub k_informative: usize,
    /// Label threshold on the planted mean (planted task only).
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Exchange class labels and their ground-truth sets.
    #[arg(long)]
    pub swap_labels: bool,
    /// CSV path; the sidecar goes to `<out>.meta.json`.
    #[arg(long)]
    pub out: PathBuf,
}

/// Where predictions come from: a built-in checkpoint or a bridged process.
#[derive(Debug, Clone, Args, Serialize)]
pub struct PredictorSource {
    /// Predictor checkpoint.
    #[arg(long, conflicts_with = "bridge")]
    pub predictor: Option<PathBuf>,
    /// Shell command speaking the NDJSON bridge protocol on stdin/stdout.
    #[arg(long)]
    pub bridge: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainPredictorArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Hidden widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainExplainerArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub source: PredictorSource,
    /// Explainer checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// Value checkpoint path; defaults to `<out>.value`.
    #[arg(long)]
    pub value_out: Option<PathBuf>,
    /// NDJSON training log path.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Masks per trajectory.
    #[arg(long)]
    pub trajectory_len: Option<usize>,
    #[arg(long)]
    pub clip_eps: Option<f64>,
    #[arg(long)]
    pub lambda_en: Option<f64>,
    #[arg(long)]
    pub lambda_v: Option<f64>,
    #[arg(long)]
    pub lambda_kl: Option<f64>,
    #[arg(long)]
    pub inner_updates: Option<usize>,
    #[arg(long)]
    pub rollouts_per_batch: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub normalize_advantages: bool,
}

/// Inputs to process: a JSON sample file or rows of a dataset.
#[derive(Debug, Clone, Args, Serialize)]
pub struct InputArgs {
    /// JSON file holding one sample or a list of samples.
    #[arg(long, conflicts_with = "data")]
    pub input: Option<PathBuf>,
    /// Dataset CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Use only the first N inputs.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExplainArgs {
    #[arg(long)]
    pub explainer: PathBuf,
    #[command(flatten)]
    pub inputs: InputArgs,
    /// Class to explain; defaults to the predictor's argmax.
    #[arg(long)]
    pub class: Option<usize>,
    #[command(flatten)]
    pub source: PredictorSource,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OracleArgs {
    #[command(flatten)]
    pub source: PredictorSource,
    #[command(flatten)]
    pub inputs: InputArgs,
    /// Class to attribute; defaults to the predictor's argmax.
    #[arg(long)]
    pub class: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Explainer,
    Oracle,
    MonteCarlo,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricArg {
    Probability,
    Accuracy,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    pub source: PredictorSource,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "explainer")]
    pub method: Method,
    /// Explainer checkpoint (explainer method).
    #[arg(long)]
    pub explainer: Option<PathBuf>,
    /// Queries per explanation (monte-carlo method).
    #[arg(long, default_value_t = 100)]
    pub mc_samples: usize,
    #[arg(long, value_enum, default_value = "probability")]
    pub metric: MetricArg,
    /// Evaluate only samples predicted as this class.
    #[arg(long)]
    pub only_class: Option<usize>,
    #[arg(long)]
    pub limit: Option<usize>,
    /// Write mean curves to `<prefix>.positive.csv` and `<prefix>.negative.csv`.
    #[arg(long)]
    pub curves: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchArgs {
    #[command(flatten)]
    pub source: PredictorSource,
    #[arg(long)]
    pub explainer: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub n_explanations: usize,
    #[arg(long, default_value_t = 100)]
    pub mc_samples: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            let err = CliError::Usage(first.trim_start_matches("error: ").to_string());
            eprintln!("error: {}: {err}", err.category());
            return err.exit_code();
        }
    };
    match commands::execute(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {}: {err}", err.category());
            err.exit_code()
        }
    }
}

pub fn run_from_env() -> i32 {
    run(std::env::args_os())
}
