//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "tsplat",
    about = "Dynamic Gaussian splatting with polynomial motion and a learned correction field",
    version
)]
pub struct Cli {
    /// Random seed override (scene generation and fitting).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for tile-parallel rendering (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Force sequential evaluation paths. Outputs are bit-identical either
    /// way; this only pins the schedule.
    #[arg(long, global = true)]
    pub deterministic: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset: scene, ground-truth frames, analytic
    /// trajectories and a dataset manifest.
    Scenegen(ScenegenArgs),
    /// Fit a scene to the frames of a dataset.
    Fit(FitArgs),
    /// Render a scene at one time or a time range.
    Render(RenderArgs),
    /// Compare rendered frames against reference frames.
    Eval(EvalArgs),
    /// Run the full model plus the five component ablations on one dataset.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct ScenegenArgs {
    /// Synthetic spec JSON; omit to build one from --generator and the
    /// override flags.
    #[arg(long)]
    pub spec: Option<PathBuf>,

    /// Generator name: static_blobs, linear_flight, rigid_spin,
    /// articulated_pair or fade_in_out.
    #[arg(long)]
    pub generator: Option<String>,

    #[arg(long)]
    pub gaussians: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub cameras: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub motion_scale: Option<f64>,

    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Initial scene file. Exactly one of --scene / --spec is required.
    #[arg(long)]
    pub scene: Option<PathBuf>,

    /// Synthetic spec JSON; the initial scene is derived from its canonical
    /// geometry with neutral appearance and zero motion.
    #[arg(long)]
    pub spec: Option<PathBuf>,

    /// Dataset directory produced by scenegen (contains dataset.json and
    /// frames/).
    #[arg(long)]
    pub data: PathBuf,

    /// Output directory for fitted_scene.json and history.csv.
    #[arg(long)]
    pub out: PathBuf,

    /// Fit configuration JSON; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub lambda_ssim: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,

    /// Cameras excluded from training (held out for evaluation).
    #[arg(long)]
    pub holdout_cam: Vec<usize>,

    /// Freeze the temporal opacity kernel (time-independent opacity).
    #[arg(long)]
    pub no_time_opacity: bool,
    /// Freeze position polynomial orders >= 1.
    #[arg(long)]
    pub no_time_motion: bool,
    /// Freeze rotation polynomial orders >= 1.
    #[arg(long)]
    pub no_time_rotation: bool,
    /// Freeze scale polynomial orders >= 1.
    #[arg(long)]
    pub no_time_scale: bool,
    /// Freeze the correction field at the identity.
    #[arg(long)]
    pub no_peano_remainder: bool,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub scene: PathBuf,

    /// Camera JSON file.
    #[arg(long)]
    pub camera: PathBuf,

    /// Single timestamp in [0, 1].
    #[arg(long)]
    pub t: Option<f64>,

    /// Time range start (with --t-end and --steps).
    #[arg(long)]
    pub t_start: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Number of frames in the range; 1 renders only --t-start.
    #[arg(long)]
    pub steps: Option<usize>,

    /// Output file (single t; extension selects ppm/png) or directory
    /// (time range).
    #[arg(long)]
    pub out: PathBuf,

    /// Frame format for time ranges: ppm (default) or png.
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of rendered frames.
    #[arg(long)]
    pub renders: PathBuf,

    /// Directory of reference frames with matching file names.
    #[arg(long)]
    pub truth: PathBuf,

    /// Metrics CSV path; omitted prints CSV to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Synthetic spec JSON describing the dataset to sweep on.
    #[arg(long)]
    pub spec: PathBuf,

    /// Output directory (dataset, per-row fits, ablation.csv).
    #[arg(long)]
    pub out: PathBuf,

    /// Fit configuration JSON applied to every row.
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long)]
    pub iterations: Option<usize>,
}
