use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "relight", version, about = "Relight and harmonize images and videos with SH lighting")]
pub struct Cli {
    /// Print errors to stderr as one JSON object
    #[arg(long, global = true)]
    pub json_errors: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Relight a single image
    Image(ImageArgs),
    /// Relight a frame sequence with temporal blending
    Video(VideoArgs),
    /// Compute fidelity and temporal metrics over frame directories
    Eval(EvalArgs),
    /// Render an analytic sphere sequence with exact ground truth
    GenScenario(ScenarioArgs),
    /// Project an equirectangular environment map onto SH coefficients
    ShProject(ProjectArgs),
    /// Run the HTTP service
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct LightingFlags {
    /// Guided refinement radius in pixels (off when omitted)
    #[arg(long, value_name = "N")]
    pub refine_radius: Option<usize>,

    /// Treat the coefficients as already convolved irradiance
    #[arg(long)]
    pub no_convolve: bool,

    /// How far foreground statistics move toward the background, in [0, 1]
    #[arg(long, value_name = "S", default_value_t = 1.0)]
    pub harmonize_strength: f64,

    /// Normal maps store y pointing down
    #[arg(long)]
    pub flip_normal_y: bool,
}

#[derive(Debug, Args)]
pub struct ImageArgs {
    #[arg(long, value_name = "PNG")]
    pub input: Option<PathBuf>,

    /// (n + 1) / 2 encoded normal map
    #[arg(long, value_name = "PNG")]
    pub normals: Option<PathBuf>,

    /// Foreground matte; gray or RGB, white is foreground
    #[arg(long, value_name = "PNG")]
    pub mask: Option<PathBuf>,

    /// Target lighting as SH JSON; omit for background-only harmonization
    #[arg(long, value_name = "JSON")]
    pub sh: Option<PathBuf>,

    /// New background to composite over and harmonize toward
    #[arg(long, value_name = "PNG")]
    pub background: Option<PathBuf>,

    #[arg(long, value_name = "PNG")]
    pub out: Option<PathBuf>,

    /// Write fidelity metrics against --reference to this JSON file
    #[arg(long, value_name = "JSON")]
    pub report: Option<PathBuf>,

    #[arg(long, value_name = "PNG")]
    pub reference: Option<PathBuf>,

    #[command(flatten)]
    pub lighting: LightingFlags,
}

#[derive(Debug, Args)]
pub struct VideoArgs {
    /// JSON listing per-frame assets and the lighting file
    #[arg(long, value_name = "JSON")]
    pub manifest: Option<PathBuf>,

    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,

    /// Precomputed FLO1 flows, one per frame transition, in name order
    #[arg(long, value_name = "DIR")]
    pub flow_dir: Option<PathBuf>,

    #[arg(long, value_name = "W", default_value_t = 0.85)]
    pub spatial_w: f32,

    #[arg(long, value_name = "W", default_value_t = 0.5)]
    pub temporal_w: f32,

    /// Relight every frame independently
    #[arg(long)]
    pub no_temporal: bool,

    #[command(flatten)]
    pub lighting: LightingFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Relit frames (PNG, name order)
    #[arg(long, value_name = "DIR")]
    pub results: Option<PathBuf>,

    /// Input frames, used to estimate flow when --flows is absent
    #[arg(long, value_name = "DIR")]
    pub source: Option<PathBuf>,

    /// FLO1 flows, one per frame transition
    #[arg(long, value_name = "DIR")]
    pub flows: Option<PathBuf>,

    /// Masks; restrict fidelity metrics to the foreground
    #[arg(long, value_name = "DIR")]
    pub mask_dir: Option<PathBuf>,

    /// Ground-truth frames for L1 / PSNR / SSIM
    #[arg(long, value_name = "DIR")]
    pub reference: Option<PathBuf>,

    /// Also restrict temporal metrics to the foreground (needs --mask-dir)
    #[arg(long)]
    pub foreground_only: bool,

    /// Compute on sRGB-encoded values instead of linear light
    #[arg(long)]
    pub srgb: bool,

    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    pub report: ReportFormat,

    /// Report destination (stdout when omitted)
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// 1: moving sphere, static light; 2: static sphere, rotating light; 3: both
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub scenario: Option<u8>,

    #[arg(long, default_value_t = relight_core::scenario::DEFAULT_FRAME_COUNT)]
    pub frames: usize,

    #[arg(long, value_name = "WxH", default_value = "256x256")]
    pub res: String,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Amplitude of the per-frame perturbation of observed normals
    #[arg(long)]
    pub normal_noise: Option<f32>,

    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    /// Equirectangular environment map (sRGB PNG)
    #[arg(long, value_name = "PNG")]
    pub env: Option<PathBuf>,

    #[arg(long, value_name = "JSON")]
    pub out: Option<PathBuf>,

    #[arg(long, default_value_t = relight_core::sh::MAX_BANDS)]
    pub bands: usize,

    #[arg(long, default_value_t = crate::commands::DEFAULT_PROJECTION_SAMPLES)]
    pub samples: usize,

    #[arg(long, default_value_t = relight_core::sh::DEFAULT_PROJECTION_SEED)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,

    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,

    /// Largest accepted image, in pixels
    #[arg(long, default_value_t = crate::service::DEFAULT_MAX_PIXELS)]
    pub max_pixels: usize,

    /// Concurrent relight computations (defaults to the CPU count)
    #[arg(long)]
    pub workers: Option<usize>,

    /// Static front-end bundle to serve at /
    #[arg(long, value_name = "DIR")]
    pub ui_dir: Option<PathBuf>,
}
