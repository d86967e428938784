//! Command-line surface of the pipeline. Every command is a pure function
//! of its input files, the configuration document, and the seed; repeated
//! runs produce byte-identical outputs.
//!
//! Exit codes: 0 success, 2 bad input, 3 configuration error. Failures
//! print a machine-readable JSON record on stderr.

mod commands;
mod formats;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lidarpipe_core::config::PipelineConfig;
use lidarpipe_core::error::Error as CoreError;

#[derive(Parser)]
#[command(name = "lidarpipe", version, about = "Deterministic LiDAR detection pipeline tooling")]
struct Cli {
    /// Pipeline configuration document (JSON); built-in defaults when omitted
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Overrides every seed in the configuration
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Worker threads for frame-parallel stages [default: all cores]
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory (manifest, clouds, annotations)
    Synth(SynthArgs),
    /// Voxelize a point cloud into a sparse mean-feature grid
    Voxelize(VoxelizeArgs),
    /// Build the class-balancing frame duplication plan
    SamplePlan(SamplePlanArgs),
    /// Build a ground-truth object database, or paste objects into a frame
    Gtaug(GtaugArgs),
    /// Apply one seeded global augmentation to a cloud and its boxes
    Augment(AugmentArgs),
    /// Generate per-point foreground labels and center offsets
    AuxTargets(AuxTargetsArgs),
    /// Interpolate multi-stage voxel features back onto the points
    Interp(InterpArgs),
    /// Score-filter and suppress detections per group and across groups
    Nms(NmsArgs),
    /// Score predictions against ground truth (AP, TP metrics, NDS)
    Eval(EvalArgs),
    /// Render a BEV SVG of points, ground truth (green), predictions (blue)
    Render(RenderArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Number of keyframes to generate
    #[arg(long, default_value_t = 10)]
    frames: usize,
    /// Output dataset directory
    #[arg(long, value_name = "DIR")]
    output: PathBuf,
    /// Class mix as name=weight pairs, e.g. "car=0.5,pedestrian=0.3"
    #[arg(long, value_name = "LIST")]
    class_mix: Option<String>,
    /// Also emit jittered predictions (preds.json)
    #[arg(long)]
    with_preds: bool,
    /// Non-keyframe sweeps per frame
    #[arg(long, default_value_t = 0)]
    sweeps: usize,
    /// Ground-clutter points per frame
    #[arg(long, default_value_t = 400)]
    clutter: usize,
}

#[derive(Args)]
struct VoxelizeArgs {
    /// Input point-cloud file
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Output voxel-grid file
    #[arg(long, value_name = "PATH")]
    output: PathBuf,
}

#[derive(Args)]
struct SamplePlanArgs {
    /// Dataset manifest
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    /// Output plan JSON
    #[arg(long, value_name = "PATH")]
    output: PathBuf,
    /// Maximum duplication factor [default: 10 or config]
    #[arg(long, value_name = "F")]
    cap: Option<f64>,
}

#[derive(Args)]
struct GtaugArgs {
    /// Build mode: dataset manifest to crop objects from
    #[arg(long, value_name = "PATH", conflicts_with = "db")]
    manifest: Option<PathBuf>,
    /// Build mode: directory to persist the database into
    #[arg(long, value_name = "DIR", requires = "manifest")]
    save_db: Option<PathBuf>,
    /// Paste mode: previously built database directory
    #[arg(long, value_name = "DIR", requires = "cloud")]
    db: Option<PathBuf>,
    /// Paste mode: frame cloud to augment
    #[arg(long, value_name = "PATH")]
    cloud: Option<PathBuf>,
    /// Paste mode: frame annotation file
    #[arg(long, value_name = "PATH")]
    boxes: Option<PathBuf>,
    /// Paste mode: per-class quotas, e.g. "bicycle=4,motorcycle=2"
    /// [default: config quotas]
    #[arg(long, value_name = "LIST")]
    quota: Option<String>,
    /// Paste mode: output cloud path
    #[arg(long, value_name = "PATH")]
    output_cloud: Option<PathBuf>,
    /// Paste mode: output annotation path
    #[arg(long, value_name = "PATH")]
    output_boxes: Option<PathBuf>,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long, value_name = "PATH")]
    cloud: PathBuf,
    #[arg(long, value_name = "PATH")]
    boxes: PathBuf,
    #[arg(long, value_name = "PATH")]
    output_cloud: PathBuf,
    #[arg(long, value_name = "PATH")]
    output_boxes: PathBuf,
}

#[derive(Args)]
struct AuxTargetsArgs {
    #[arg(long, value_name = "PATH")]
    cloud: PathBuf,
    #[arg(long, value_name = "PATH")]
    boxes: PathBuf,
    /// Output sidecar, aligned index-for-index with the cloud
    #[arg(long, value_name = "PATH")]
    output: PathBuf,
    /// Write JSON instead of the binary sidecar
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct InterpArgs {
    #[arg(long, value_name = "PATH")]
    cloud: PathBuf,
    /// Output feature file
    #[arg(long, value_name = "PATH")]
    output: PathBuf,
    /// Downsampling stages; each uses the next config radius
    /// [default: one per config radius: 0.2, 0.4, 0.8]
    #[arg(long, value_name = "N")]
    stages: Option<usize>,
}

#[derive(Args)]
struct NmsArgs {
    /// Detection JSON (frame_id + box + score rows)
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    #[arg(long, value_name = "PATH")]
    output: PathBuf,
    /// Score threshold [default: 0.1]
    #[arg(long, value_name = "F")]
    score_thresh: Option<f64>,
    /// In-group IoU threshold [default: 0.2]
    #[arg(long, value_name = "F")]
    iou_in_group: Option<f64>,
    /// Cross-group IoU threshold [default: 0.3]
    #[arg(long, value_name = "F")]
    iou_cross_group: Option<f64>,
    /// Proposals retained per group before suppression [default: 1000]
    #[arg(long, value_name = "N")]
    top_k: Option<usize>,
    /// Boxes kept per group after suppression [default: 80]
    #[arg(long, value_name = "N")]
    max_per_group: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, value_name = "PATH")]
    preds: PathBuf,
    #[arg(long, value_name = "PATH")]
    gts: PathBuf,
    /// Report JSON output
    #[arg(long, value_name = "PATH")]
    output: PathBuf,
    /// Optional CSV of sampled PR points
    #[arg(long, value_name = "PATH")]
    pr_csv: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long, value_name = "PATH")]
    cloud: Option<PathBuf>,
    /// Ground-truth annotation JSON (drawn green)
    #[arg(long, value_name = "PATH")]
    gt: Option<PathBuf>,
    /// Detection JSON (drawn blue); all frames' boxes are drawn
    #[arg(long, value_name = "PATH")]
    preds: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    output: PathBuf,
}

pub struct Ctx {
    pub config: PipelineConfig,
    pub seed: Option<u64>,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| anyhow::anyhow!("thread pool: {e}"))?;
    }
    let config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let ctx = Ctx {
        config,
        seed: cli.seed,
    };
    match cli.command {
        Command::Synth(args) => commands::synth(&ctx, args),
        Command::Voxelize(args) => commands::voxelize(&ctx, args),
        Command::SamplePlan(args) => commands::sample_plan(&ctx, args),
        Command::Gtaug(args) => commands::gtaug(&ctx, args),
        Command::Augment(args) => commands::augment(&ctx, args),
        Command::AuxTargets(args) => commands::aux_targets(&ctx, args),
        Command::Interp(args) => commands::interp(&ctx, args),
        Command::Nms(args) => commands::nms(&ctx, args),
        Command::Eval(args) => commands::eval(&ctx, args),
        Command::Render(args) => commands::render(&ctx, args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let is_config = err
                .chain()
                .any(|cause| matches!(cause.downcast_ref::<CoreError>(), Some(CoreError::Config(_))));
            let kind = if is_config { "config" } else { "input" };
            let record = serde_json::json!({ "error": format!("{err:#}"), "kind": kind });
            eprintln!("{record}");
            ExitCode::from(if is_config { 3 } else { 2 })
        }
    }
}
