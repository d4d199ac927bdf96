use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use voxelkd::grid::DEFAULT_VOXEL_SIZE;
use voxelkd::noise::DEFAULT_DELTA_RANGE;
use voxelkd::surface::DEFAULT_TRUNCATION;

#[derive(Debug, Parser)]
#[command(name = "voxelkd", version, about = "Voxel scene-completion geometry, depth noise and distillation tools")]
pub struct Cli {
    /// Worker threads. Output bytes do not depend on this value.
    #[arg(long, global = true, env = "VOXELKD_THREADS", value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Truncated signed distance grid from a depth map.
    Tsdf(TsdfArgs),
    /// Depth map rendered from a voxel label grid.
    RenderDepth(RenderArgs),
    /// Per-class zero-noise rates and delta-noise confusion of a depth pair.
    NoiseStats(NoiseStatsArgs),
    /// Synthetic zero and delta noise on a depth map.
    InjectNoise(InjectArgs),
    /// Scene-completion and semantic scene-completion metrics.
    Eval(EvalArgs),
    /// Student loss report from student and teacher volumes.
    KdLoss(KdLossArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Grid dimensions in voxels.
    #[arg(long, value_name = "X,Y,Z", value_parser = parse_dims, default_value = "60,36,60")]
    pub grid: [usize; 3],

    /// Voxel edge length in meters.
    #[arg(long, default_value_t = DEFAULT_VOXEL_SIZE)]
    pub voxel_size: f64,

    /// World position of the center of voxel (0, 0, 0), in meters.
    #[arg(long, value_name = "X,Y,Z", value_parser = parse_origin, default_value = "0,0,0", allow_hyphen_values = true)]
    pub origin: [f64; 3],
}

#[derive(Debug, Args)]
pub struct TsdfArgs {
    pub depth: PathBuf,
    pub camera: PathBuf,
    pub output: PathBuf,

    #[command(flatten)]
    pub grid: GridArgs,

    /// Truncation distance in meters.
    #[arg(long, default_value_t = DEFAULT_TRUNCATION)]
    pub truncation: f64,

    /// Keep raw metric distances instead of normalizing to [-1, 1].
    #[arg(long)]
    pub no_normalize: bool,

    /// Also write the observed/occluded evaluation mask.
    #[arg(long, value_name = "MASK.vxg")]
    pub mask_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    pub gt: PathBuf,
    pub camera: PathBuf,
    pub output: PathBuf,

    /// Also write the per-pixel hit labels as a (H, W, 1) label grid.
    #[arg(long, value_name = "LABELS.vxg")]
    pub labels_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NoiseStatsArgs {
    pub clean: PathBuf,
    pub noisy: PathBuf,
    /// Voxel ground truth; pixel labels come from the voxel each pixel lands in.
    pub gt: PathBuf,
    pub camera: PathBuf,
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct InjectArgs {
    pub depth: PathBuf,
    pub output: PathBuf,

    /// Fraction of measured pixels set to zero.
    #[arg(long)]
    pub zero_rate: Option<f64>,

    /// Fraction of measured pixels shifted in depth.
    #[arg(long)]
    pub delta_rate: Option<f64>,

    /// Smallest depth shift in meters.
    #[arg(long, default_value_t = DEFAULT_DELTA_RANGE.0)]
    pub delta_min: f64,

    /// Largest depth shift in meters.
    #[arg(long, default_value_t = DEFAULT_DELTA_RANGE.1)]
    pub delta_max: f64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Table,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub pred: PathBuf,
    pub gt: PathBuf,
    pub mask: PathBuf,
    pub output: PathBuf,

    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct KdLossArgs {
    #[arg(long, value_name = "FEATURES.vxg")]
    pub student_features: PathBuf,
    #[arg(long, value_name = "FEATURES.vxg")]
    pub teacher_features: PathBuf,
    #[arg(long, value_name = "LOGITS.vxg")]
    pub student_logits: PathBuf,
    #[arg(long, value_name = "LOGITS.vxg")]
    pub teacher_logits: PathBuf,
    #[arg(long, value_name = "GT.vxg")]
    pub gt: PathBuf,

    /// Per-pixel student logits as a (H, W, 1) grid; needs --gt2d.
    #[arg(long, value_name = "LOGITS2D.vxg", requires = "gt2d")]
    pub logits2d: Option<PathBuf>,
    /// Per-pixel labels as a (H, W, 1) grid; needs --logits2d.
    #[arg(long, value_name = "LABELS2D.vxg", requires = "logits2d")]
    pub gt2d: Option<PathBuf>,

    pub output: PathBuf,

    #[arg(long, default_value_t = 0.25)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.25)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.1)]
    pub smoothing: f64,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
}

fn parse_triple<T: std::str::FromStr>(s: &str) -> Result<[T; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated values, got `{s}`"));
    }
    let mut out = Vec::with_capacity(3);
    for p in parts {
        out.push(p.parse::<T>().map_err(|_| format!("`{p}` is not a valid number"))?);
    }
    out.try_into().map_err(|_| unreachable!())
}

fn parse_dims(s: &str) -> Result<[usize; 3], String> {
    parse_triple(s)
}

fn parse_origin(s: &str) -> Result<[f64; 3], String> {
    let o: [f64; 3] = parse_triple(s)?;
    if o.iter().any(|v| !v.is_finite()) {
        return Err(format!("origin `{s}` must be finite"));
    }
    Ok(o)
}
