//! Flags. Every optional field can also come from the `--config` JSON file,
//! whose keys are the long flag names; flags win.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "phasegen", version, about = "Frequency-domain text-to-motion generation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic motion corpus.
    GenCorpus(GenCorpusArgs),
    /// Detect primary segments and augmentation pools.
    Preprocess(PreprocessArgs),
    /// Train the phase autoencoder.
    TrainAe(TrainAeArgs),
    /// Train the denoiser and bundle a model stack.
    TrainDiff(TrainDiffArgs),
    /// Generate one motion from a prompt.
    Generate(GenerateArgs),
    /// Generate a long motion by repetition or chained generation.
    Extend(ExtendArgs),
    /// Crossfade two clips in phase space.
    Blend(BlendArgs),
    /// Up-sample a clip's periodic section.
    Interp(InterpArgs),
    /// Run one of the evaluation studies.
    Eval(EvalArgs),
    /// Export a clip as CSV, PNG frames or a render manifest.
    ExportAnim(ExportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenCorpus(_) => "gen-corpus",
            Command::Preprocess(_) => "preprocess",
            Command::TrainAe(_) => "train-ae",
            Command::TrainDiff(_) => "train-diff",
            Command::Generate(_) => "generate",
            Command::Extend(_) => "extend",
            Command::Blend(_) => "blend",
            Command::Interp(_) => "interp",
            Command::Eval(_) => "eval",
            Command::ExportAnim(_) => "export-anim",
        }
    }
}

#[derive(Debug, Clone, Args, Default)]
pub struct Common {
    /// JSON file with defaults for any flag of this command.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", default)]
pub struct GenCorpusArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Clips per motion family.
    #[arg(long)]
    pub per_family: Option<usize>,
    /// Frames per clip.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Comma-separated family names.
    #[arg(long)]
    pub families: Option<String>,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", default)]
pub struct PreprocessArgs {
    /// Corpus directory; it is read, never modified.
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    /// Annotated copy of the corpus plus one pool sidecar per clip.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub lambda3: Option<f64>,
    /// Pool size per clip.
    #[arg(long)]
    pub top_w: Option<usize>,
    #[arg(long)]
    pub min_len: Option<usize>,
    /// Where loss matrices go as CSV and PNG.
    #[arg(long)]
    pub debug_dir: Option<PathBuf>,
    /// How many clips get loss matrices written.
    #[arg(long)]
    pub debug_clips: Option<usize>,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", default)]
pub struct TrainAeArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_end: Option<f64>,
    #[arg(long)]
    pub lambda_fk: Option<f64>,
    /// Number of phase channels M.
    #[arg(long)]
    pub phases: Option<usize>,
    #[arg(long)]
    pub fmax: Option<u32>,
    /// `sincos` or `sin`.
    #[arg(long)]
    pub repr: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", default)]
pub struct TrainDiffArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Autoencoder checkpoint from `train-ae`.
    #[arg(long)]
    pub ae: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Diffusion steps of the noise schedule.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Optimizer iterations.
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_end: Option<f64>,
    #[arg(long)]
    pub mask_text: Option<f64>,
    #[arg(long)]
    pub mask_pose: Option<f64>,
    #[arg(long)]
    pub lambda_dec: Option<f64>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub ff_mult: Option<usize>,
    #[arg(long)]
    pub text_dim: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", default)]
pub struct SamplerArgs {
    #[arg(long)]
    pub guidance: Option<f64>,
    /// Denoising steps visited while sampling.
    #[arg(long)]
    pub sampling_steps: Option<usize>,
    /// `posterior` or `marginal`.
    #[arg(long)]
    pub renoise: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", default)]
pub struct GenerateArgs {
    /// Model stack directory from `train-diff`.
    #[arg(long, required_unless_present = "config")]
    pub ckpt: Option<PathBuf>,
    #[arg(long)]
    pub prompt: Option<String>,
    #[arg(long)]
    pub length: Option<usize>,
    /// Period in frames; defaults to the stack's.
    #[arg(long)]
    pub period: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub sampler: SamplerArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", default)]
pub struct ExtendArgs {
    #[arg(long, required_unless_present = "config")]
    pub ckpt: Option<PathBuf>,
    /// `repetition` or `generative`.
    #[arg(long)]
    pub mode: Option<String>,
    /// Repeat for several prompts; generative mode cycles through them.
    #[arg(long)]
    pub prompt: Vec<String>,
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long)]
    pub period: Option<usize>,
    #[arg(long)]
    pub seam_window: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub sampler: SamplerArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", default)]
pub struct BlendArgs {
    #[arg(long, required_unless_present = "config")]
    pub ckpt: Option<PathBuf>,
    #[arg(long)]
    pub a: Option<PathBuf>,
    #[arg(long)]
    pub b: Option<PathBuf>,
    #[arg(long)]
    pub window: Option<usize>,
    /// First frame of the crossfade; centred when omitted.
    #[arg(long)]
    pub start: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", default)]
pub struct InterpArgs {
    #[arg(long, required_unless_present = "config")]
    pub ckpt: Option<PathBuf>,
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub factor: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    ReconStudy,
    TransitionStudy,
    GuidanceSweep,
    Timing,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", default)]
pub struct EvalArgs {
    #[arg(value_enum)]
    #[serde(skip)]
    pub study: Option<Study>,
    /// Model stack (every study but recon-study).
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Corpus directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// recon-study: training epochs per cell.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// recon-study: comma-separated cells such as `30:sincos:128,8:sin:128`.
    #[arg(long)]
    pub cells: Option<String>,
    /// transition-study: number of prompt pairs.
    #[arg(long)]
    pub pairs: Option<usize>,
    /// guidance-sweep: comma-separated scales.
    #[arg(long)]
    pub scales: Option<String>,
    /// timing: comma-separated lengths.
    #[arg(long)]
    pub lengths: Option<String>,
    /// timing: measured runs per length.
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub sampling_steps: Option<usize>,
    #[arg(long)]
    pub guidance: Option<f64>,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExportFormat {
    Csv,
    FramesPng,
    StickMp4Script,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", default)]
pub struct ExportArgs {
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<ExportFormat>,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}
