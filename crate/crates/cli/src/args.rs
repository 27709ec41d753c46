use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use egd_core::dataio::{GestureClass, TaskClass};
use egd_core::eval::TrainingSetup;

#[derive(Debug, Parser)]
#[command(
    name = "egd",
    version,
    about = "Gesture-level error detection on robot kinematics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic dataset in JIGSAWS layout.
    Synth(SynthArgs),
    /// Train one network on a scope and save a checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on held-out trials.
    Evaluate(EvaluateArgs),
    /// Leave-one-super-trial-out cross-validation.
    Loso(LosoArgs),
    /// Pairwise symmetric KL divergence between gesture classes.
    Kld(KldArgs),
    /// Per-window inference latency.
    Bench(BenchArgs),
    /// Replay a trial through the streaming detector.
    Monitor(MonitorArgs),
    /// Finite-difference check of every op and architecture.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct SeedArg {
    /// Base seed of every random stream.
    #[arg(long, env = "EGD_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset root (`<root>/<Task>/kinematics/AllGestures`, `<root>/<Task>/transcriptions`).
    #[arg(long)]
    pub data: PathBuf,
    /// Error-label CSV; defaults to `<data>/labels.csv`.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScopeArgs {
    /// gsts, gst, gts or gtt.
    #[arg(long, default_value = "gst")]
    pub setup: TrainingSetup,
    #[arg(long)]
    pub task: Option<TaskClass>,
    #[arg(long)]
    pub gesture: Option<GestureClass>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// cnn, lstm, siamese-cnn or siamese-lstm.
    #[arg(long, default_value = "siamese-cnn")]
    pub model: String,
    /// JSON object of config overrides, or `@file.json`.
    #[arg(long)]
    pub config: Option<String>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Number of trials; a multiple of 10 (5 repetitions × 2 tasks per subject).
    #[arg(long, default_value_t = 40)]
    pub trials: usize,
    /// JSON overrides of the generator config, or `@file.json`.
    #[arg(long)]
    pub config: Option<String>,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub scope: ScopeArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Leave this repetition out of training.
    #[arg(long)]
    pub holdout: Option<u32>,
    /// Checkpoint file to write.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Comma-separated trial ids (`S_B001`); defaults to every trial the
    /// checkpoint was not trained on.
    #[arg(long, value_delimiter = ',')]
    pub trials: Vec<String>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LosoArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub scope: ScopeArgs,
    /// A network name or `nearest-centroid`.
    #[arg(long, default_value = "siamese-cnn")]
    pub model: String,
    #[arg(long)]
    pub config: Option<String>,
    /// Tune lr, batch size and epochs by inner cross-validation per fold.
    #[arg(long)]
    pub tune: bool,
    /// Worker threads for independent (fold, scope) units.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Args)]
pub struct KldArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = egd_core::eval::KLD_BINS)]
    pub bins: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Architectures to time with fresh weights (repeatable); all four by default.
    #[arg(long)]
    pub model: Vec<String>,
    /// Time trained checkpoints instead (repeatable).
    #[arg(long)]
    pub checkpoint: Vec<PathBuf>,
    #[arg(long)]
    pub config: Option<String>,
    /// Shared reference-set size for the Siamese networks.
    #[arg(long, default_value_t = 50)]
    pub references: usize,
    /// Windows per pass.
    #[arg(long, default_value_t = 50)]
    pub windows: usize,
    #[arg(long, default_value_t = 3)]
    pub repetitions: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Args)]
pub struct MonitorArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Checkpoints to route gestures to (repeatable).
    #[arg(long, required = true)]
    pub checkpoint: Vec<PathBuf>,
    /// Trial to replay (`S_B001` or `Suturing_B001`).
    #[arg(long)]
    pub trial: String,
    /// Replay speed: 1 is real time at 30 Hz, 0 is as fast as possible.
    #[arg(long, default_value_t = 1.0)]
    pub rate: f64,
    /// Output directory for events.jsonl and summary.csv; events go to
    /// standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Random instances per op and architecture.
    #[arg(long, default_value_t = 20)]
    pub instances: usize,
    /// Sampled coordinates per tensor in the architecture checks.
    #[arg(long, default_value_t = 4)]
    pub per_tensor: usize,
    /// Output directory for gradcheck.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub seed: SeedArg,
}
