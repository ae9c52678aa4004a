use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod io_util;
mod manifest;

#[derive(Parser, Debug)]
#[command(
    name = "iri-edge",
    version,
    about = "Road roughness (IRI) estimation from axle acceleration and GPS logs"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub cmd: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML file with [synth], [ingest], [fit], [pipeline], [thresholds], [benchmark], [shift], [repeat] tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for all outputs and the run manifest.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Skip malformed input rows instead of failing.
    #[arg(long, global = true)]
    pub lenient: bool,
    /// Hold out whole routes (or a contiguous tail) instead of random segments.
    #[arg(long, global = true)]
    pub block_split: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Synthesize a road, a sensor stream over it and reference labels.
    Simulate(SimulateArgs),
    /// Normalise a device log into the canonical CSV.
    Ingest(IngestArgs),
    /// Cut a stream into 0.1-mile windows and write the feature table.
    Features(FeaturesArgs),
    /// Fit a model on feature and label tables and report held-out metrics.
    Train(TrainArgs),
    /// Predict IRI for every row of a feature table.
    Predict(PredictArgs),
    /// Score predictions against reference labels.
    Evaluate(EvaluateArgs),
    /// Run-to-run spread of per-segment predictions.
    Repeatability(RepeatabilityArgs),
    /// Stream a log through the model and emit one NDJSON record per segment.
    Pipeline(PipelineArgs),
    /// Write the data series behind standard charts as CSV.
    PlotData(PlotDataArgs),
    /// Seeded model benchmark, distribution-shift and repeatability experiments.
    Benchmark(BenchmarkArgs),
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Roughness class A-E.
    #[arg(long)]
    pub class: Option<String>,
    /// PSD level at 0.1 cycles/m, m^3; overrides the class.
    #[arg(long)]
    pub gd_n0: Option<f64>,
    #[arg(long)]
    pub route_mi: Option<f64>,
    /// Travel speeds in mph, each held over an equal share of the route.
    #[arg(long, value_delimiter = ',')]
    pub speed_mph: Vec<f64>,
    #[arg(long)]
    pub run: Option<u32>,
    #[arg(long)]
    pub wander_m: Option<f64>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Also write the road profile.
    #[arg(long)]
    pub profile: bool,
    /// Prefix for output file names.
    #[arg(long)]
    pub tag: Option<String>,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub sample_rate: Option<f64>,
    /// Raw counts to m/s^2.
    #[arg(long)]
    pub accel_scale: Option<f64>,
    #[arg(long, default_value = "stream.csv")]
    pub output: String,
}

#[derive(Args, Debug)]
pub struct FeaturesArgs {
    pub input: PathBuf,
    #[arg(long, default_value = "features.csv")]
    pub output: String,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Single,
    Bagged,
    Boosted,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Single => "single",
            ModelKind::Bagged => "bagged",
            ModelKind::Boosted => "boosted",
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Feature tables, paired in order with --labels.
    #[arg(long, required = true, num_args = 1..)]
    pub features: Vec<PathBuf>,
    #[arg(long, required = true, num_args = 1..)]
    pub labels: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "boosted")]
    pub mode: ModelKind,
    #[arg(long)]
    pub n_trees: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Use histogram splits with at most this many bins per feature.
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long, default_value_t = 0.8)]
    pub train_frac: f64,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    pub features: PathBuf,
    #[arg(long, default_value = "predictions.csv")]
    pub output: String,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Predictions: CSV with index and iri columns, or pipeline NDJSON.
    #[arg(long)]
    pub pred: PathBuf,
    /// Reference labels CSV.
    #[arg(long)]
    pub truth: PathBuf,
}

#[derive(Args, Debug)]
pub struct RepeatabilityArgs {
    /// Per-run prediction files aligned by segment index.
    #[arg(long, num_args = 1..)]
    pub runs: Vec<PathBuf>,
    /// Without --runs: synthesize wander runs from [synth] and score them with this model.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub n_runs: u32,
    #[arg(long)]
    pub wander_m: Option<f64>,
}

#[derive(Args, Debug)]
pub struct PipelineArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Canonical CSV or device log; `-` reads standard input.
    pub input: PathBuf,
    /// `stdout`, `file:PATH` (relative to --out-dir) or `tcp:HOST:PORT`.
    #[arg(long)]
    pub emit: Option<String>,
    /// Also emit the trailing partial window.
    #[arg(long)]
    pub include_partial: bool,
    /// Print a JSON totals line to stderr when done.
    #[arg(long)]
    pub stats: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// index,truth,pred
    Scatter,
    /// index,distance_mi,truth,pred
    Line,
    /// class,pred_count,truth_count
    Pie,
    /// index,mean,sd,cv
    Repeatability,
}

#[derive(Args, Debug)]
pub struct PlotDataArgs {
    #[arg(value_enum)]
    pub kind: PlotKind,
    #[arg(long)]
    pub pred: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Per-run prediction files, for the repeatability chart.
    #[arg(long, num_args = 1..)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub output: Option<String>,
}

#[derive(Args, Debug)]
pub struct BenchmarkArgs {
    /// Number of consecutive seeds starting at --seed (default 1).
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub segments: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
