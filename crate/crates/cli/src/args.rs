use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use typegaze_core::HumanParams;

#[derive(Debug, Parser)]
#[command(name = "typegaze", version, about = "Predict eye movements during touchscreen typing from keypress logs")]
pub struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for per-trial work in infer and eval.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: u64,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Only print warnings and errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic keypress logs and scanpaths.
    Simulate(SimulateArgs),
    /// Train the typing-metrics to parameters estimator on simulated users.
    FitAmortizer(FitAmortizerArgs),
    /// Train the scanpath model.
    Train(TrainArgs),
    /// Predict scanpaths for keypress logs.
    Infer(InferArgs),
    /// Estimate per-user parameters from keypress logs.
    InferTheta(InferThetaArgs),
    /// Compare predicted and recorded scanpaths trial by trial.
    Eval(EvalArgs),
    /// Eye-hand coordination report with per-figure CSVs.
    Analyze(AnalyzeArgs),
}

pub fn parse_theta(s: &str) -> Result<HumanParams, String> {
    HumanParams::parse(s).map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 10)]
    pub users: usize,
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    /// Fixed parameters for every user; drawn per user when absent.
    #[arg(long, value_parser = parse_theta)]
    pub theta: Option<HumanParams>,
    /// Phrase file, one sentence per line.
    #[arg(long)]
    pub phrases: Option<PathBuf>,
    /// Keyboard layout JSON.
    #[arg(long)]
    pub layout: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitAmortizerArgs {
    #[arg(long, default_value_t = 5000)]
    pub users: usize,
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    #[arg(long, default_value_t = 150)]
    pub epochs: usize,
    /// Users held out of training to report recovery error.
    #[arg(long, default_value_t = 100)]
    pub holdout: usize,
    #[arg(long)]
    pub layout: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Ablation {
    Sim,
    Len,
    F,
    V,
    Params,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory with keylog.jsonl, scanpath.jsonl and theta.csv.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Estimator checkpoint used for users missing from theta.csv.
    #[arg(long)]
    pub amortizer: Option<PathBuf>,
    #[arg(long, default_value_t = 300)]
    pub sim_trials: usize,
    #[arg(long, default_value_t = 8000)]
    pub steps: u64,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    pub checkpoint_every: u64,
    /// Components to switch off.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub ablate: Vec<Ablation>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Mean,
    Sample,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub keylog: PathBuf,
    #[arg(long, value_parser = parse_theta, conflicts_with = "from_trials", required_unless_present = "from_trials")]
    pub theta: Option<HumanParams>,
    /// Directory whose keylog.jsonl is used to estimate parameters per user.
    #[arg(long, requires = "amortizer")]
    pub from_trials: Option<PathBuf>,
    #[arg(long)]
    pub amortizer: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Mean)]
    pub mode: Mode,
    #[arg(long)]
    pub layout: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferThetaArgs {
    /// Directory with keylog.jsonl.
    #[arg(long)]
    pub trials: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub layout: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value_t = typegaze_core::metrics::DEFAULT_STED_K)]
    pub sted_k: usize,
    #[arg(long)]
    pub layout: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Directory with keylog.jsonl and scanpath.jsonl.
    #[arg(long, required_unless_present_all = ["keylog", "scanpath"])]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub keylog: Option<PathBuf>,
    /// Scanpaths to analyze, for example model predictions.
    #[arg(long)]
    pub scanpath: Option<PathBuf>,
    #[arg(long)]
    pub layout: Option<PathBuf>,
    /// Also write SVG charts.
    #[arg(long)]
    pub svg: bool,
}
