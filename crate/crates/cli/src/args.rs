use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "tlt", version, about = "Time-lapse trajectory toolkit")]
pub struct Cli {
    /// TOML file supplying defaults; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Seed for every random choice the subcommand makes.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Print extra diagnostics to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic feature file with known ground truth.
    Synth(SynthArgs),
    /// Train the pretext model on the training split of a feature file.
    Train(TrainArgs),
    /// Encode features, fit the planar embedding and export coordinates.
    Embed(EmbedArgs),
    /// Fit trajectory mixtures or roll them out.
    #[command(subcommand)]
    Traj(TrajCommand),
    /// Score a model on a feature file, or cluster embedded unseen classes.
    Eval(EvalArgs),
    /// Write a static SVG scatter of embedded points.
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    Patch,
    Berry,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub classes: Option<usize>,
    /// Tracks per class.
    #[arg(long)]
    pub tracks: Option<usize>,
    #[arg(long)]
    pub sessions: Option<usize>,
    /// Feature dimension.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long, value_enum)]
    pub scale: Option<ScaleArg>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Comma-separated heads: time, variety, fungicide, rot.
    #[arg(long)]
    pub heads: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Share of untagged tracks used for training.
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Must match the value used for `train`.
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub min_dist: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub negative_samples: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Coordinate CSV for both splits.
    #[arg(long)]
    pub out: PathBuf,
    /// Also save the fitted embedding.
    #[arg(long)]
    pub embedding: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum TrajCommand {
    /// Fit mixtures over position and velocity from a coordinate CSV.
    Fit(TrajFitArgs),
    /// Integrate a fitted velocity field from a start point.
    Rollout(TrajRolloutArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct TrajFitArgs {
    #[arg(long)]
    pub coords: PathBuf,
    /// Mixture components per group.
    #[arg(long)]
    pub k: Option<usize>,
    /// Session stride of each velocity.
    #[arg(long)]
    pub eps: Option<usize>,
    /// Fit one mixture over all tracks.
    #[arg(long)]
    pub pooled: bool,
    /// Rows to fit on.
    #[arg(long, value_enum, default_value = "train")]
    pub split: SplitArg,
    /// Directory for the combined model and one file per group.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Mean,
    Sample,
}

#[derive(Debug, Args)]
pub struct TrajRolloutArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Start position as `x,y`.
    #[arg(long, allow_hyphen_values = true)]
    pub start: String,
    /// Defaults to enough steps to span the fitted season.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Group to roll out when the model holds several.
    #[arg(long)]
    pub variety: Option<u16>,
    #[arg(long)]
    pub fungicide: Option<bool>,
    /// Rollout CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, requires = "input", conflicts_with_all = ["coords", "unseen"])]
    pub model: Option<PathBuf>,
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Coordinate CSV for the unseen-class score.
    #[arg(long, requires = "unseen")]
    pub coords: Option<PathBuf>,
    /// Number of withheld classes to cluster.
    #[arg(long, requires = "coords")]
    pub unseen: Option<usize>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Must match the value used for `train`.
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Report document (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ColorArg {
    Time,
    Variety,
    Fungicide,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub coords: PathBuf,
    #[arg(long, value_enum, default_value = "variety")]
    pub color: ColorArg,
    #[arg(long, value_enum, default_value = "all")]
    pub split: SplitArg,
    /// Rollout CSV to overlay; repeatable.
    #[arg(long)]
    pub rollout: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}
