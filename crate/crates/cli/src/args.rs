use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use dlsr::noise::NoiseMode;
use dlsr::unmixing::Backend;

#[derive(Debug, Parser)]
#[command(name = "dlsr", version, about = "Abundance-domain super-resolution of hyperspectral images")]
pub struct Cli {
    /// Master seed; overrides any seed in the configuration file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// JSON configuration file. Flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Suppress progress output on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract endmembers and abundances from a cube.
    Unmix(UnmixArgs),
    /// Generate a synthetic dead-leaves training set.
    GenDl(GenDlArgs),
    /// Blur and downsample a cube.
    Degrade(DegradeArgs),
    /// Train the super-resolution network on a synthetic set.
    Train(TrainArgs),
    /// Super-resolve an abundance map with a trained checkpoint.
    Sr(SrArgs),
    /// Mix abundances back into a cube.
    Reconstruct(ReconstructArgs),
    /// Compare a test cube to a reference (PSNR, SAM, ERGAS).
    Eval(EvalArgs),
    /// Write a synthetic ground-truth scene.
    Phantom(PhantomArgs),
    /// Run unmix, gen-dl, train, sr, reconstruct and eval in one go.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct UnmixArgs {
    /// Cube header (`.json`) or stem.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = dlsr::unmixing::DEFAULT_MATERIALS)]
    pub materials: usize,
    #[arg(long, default_value = "minvol")]
    pub backend: Backend,
}

#[derive(Debug, Args)]
pub struct GenDlArgs {
    /// Abundance map to sample leaf values from. Without it leaves use
    /// Dirichlet values.
    #[arg(long)]
    pub source: Option<PathBuf>,
    /// Material count; taken from `--source` when given.
    #[arg(long)]
    pub materials: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub scale: Option<u32>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub blur_sigma: Option<f64>,
    #[arg(long)]
    pub noisy_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DegradeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub scale: u32,
    /// Blur width; defaults to the scale.
    #[arg(long)]
    pub blur_sigma: Option<f64>,
    /// Output stem inside `--out`.
    #[arg(long, default_value = "degraded")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    #[arg(long)]
    pub noise_mode: Option<NoiseMode>,
    #[arg(long)]
    pub sigma_max: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Endmember CSV of the real scene; its pseudo-inverse shapes the training noise.
    #[arg(long)]
    pub endmembers: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub features: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    #[command(flatten)]
    pub noise: NoiseArgs,
}

#[derive(Debug, Args)]
pub struct SrArgs {
    /// Checkpoint manifest (`.json`) or stem.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub abundance: PathBuf,
    /// Noise-level hint for the σ channel.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value = "abundances_sr")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub abundance: PathBuf,
    #[arg(long)]
    pub endmembers: PathBuf,
    /// Spectral offset CSV written by the PCA backend.
    #[arg(long)]
    pub offset: Option<PathBuf>,
    #[arg(long, default_value = "hsi")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub scale: u32,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 20)]
    pub bands: usize,
    #[arg(long, default_value_t = 3)]
    pub materials: usize,
    #[arg(long, default_value_t = 2)]
    pub scale: u32,
    #[arg(long)]
    pub blur_sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub scale: Option<u32>,
    #[arg(long)]
    pub materials: Option<usize>,
    #[arg(long)]
    pub backend: Option<Backend>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub features: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long)]
    pub sigma_hint: Option<f64>,
    #[command(flatten)]
    pub noise: NoiseArgs,
}
