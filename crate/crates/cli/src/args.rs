use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "wavegan", version, about = "Progressive WaveGAN speech synthesis toolkit")]
pub struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Trim leading silence and fit every clip of a dataset to 16384 samples.
    Preprocess(PreprocessArgs),
    /// Train the noise-driven stage and the audio-to-audio refinement stage.
    Train(TrainArgs),
    /// Write WAV samples from trained checkpoints.
    Generate(GenerateArgs),
    /// Summarise a JSON-lines ratings file.
    Evaluate(EvaluateArgs),
    /// Run the listening-test rating service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PreprocessArgs {
    /// Dataset root laid out as `<label>/*.wav`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated labels to keep; all when absent.
    #[arg(long, value_delimiter = ',')]
    pub labels: Vec<String>,
    /// Keep everything after the detected onset.
    #[arg(long)]
    pub no_tail_trim: bool,
    /// Fraction of the loudest frame's energy that counts as speech.
    #[arg(long, default_value_t = 0.05)]
    pub threshold: f64,
    #[arg(long, default_value_t = 512)]
    pub frame_length: usize,
    #[arg(long, default_value_t = 256)]
    pub hop: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageSelect {
    /// Both stages.
    Full,
    /// Only the noise-driven WaveGAN stage, the baseline system.
    WaveganOnly,
}

#[derive(Debug, Clone, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["data", "fixtures"]))]
pub struct TrainArgs {
    /// `key = value` hyperparameter file; desk-scale defaults otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory for checkpoints, metrics and the manifest.
    #[arg(long)]
    pub out: PathBuf,
    /// Preprocessed dataset laid out as `<label>/*.wav`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Train on this many synthetic fixture clips instead of a dataset.
    #[arg(long)]
    pub fixtures: Option<usize>,
    /// Continue from the checkpoints already in `--out`.
    #[arg(long)]
    pub resume: bool,
    #[arg(long, value_enum, default_value_t = StageSelect::Full)]
    pub stage: StageSelect,
}

#[derive(Debug, Clone, Args)]
#[command(group = clap::ArgGroup::new("system").required(true).multiple(true).args(["baseline", "proposed"]))]
pub struct GenerateArgs {
    /// Noise-driven stage checkpoint, written as `baseline_NNN.wav`.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Audio-to-audio stage checkpoint, written as `proposed_NNN.wav`.
    #[arg(long)]
    pub proposed: Option<PathBuf>,
    /// Clips per system.
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub ratings: PathBuf,
    /// Results table path; `<ratings stem>_table.csv` beside the ratings otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    /// Directory of `baseline_*.wav` and `proposed_*.wav` samples.
    #[arg(long)]
    pub samples: PathBuf,
    /// JSON-lines ratings file, created if missing and appended to.
    #[arg(long)]
    pub ratings: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
}
