//! Command implementations, callable directly from tests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

use tsplat_core::img::ImageBuffer;
use tsplat_core::metrics::{psnr, ssim, FrameMetrics, MetricReport};
use tsplat_core::optim::{fit, history_to_csv, AblationFlags, FitConfig, TrainSample, TrainSet};
use tsplat_core::render::render;
use tsplat_core::scene_io::{load_camera, load_json, load_scene, save_camera, save_json, save_scene};
use tsplat_core::synth::{
    frame_file_name, generate, DatasetManifest, FrameRef, Generated, GeneratorKind, SyntheticSpec,
};
use tsplat_core::{Error, Scene};

use crate::args::{AblateArgs, EvalArgs, FitArgs, RenderArgs, ScenegenArgs};

/// Global flags shared by every subcommand.
#[derive(Debug, Clone, Copy, Default)]
pub struct Global {
    pub seed: Option<u64>,
    pub deterministic: bool,
}

/// A misuse of the command line, distinct from bad data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn exit_code_for(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    if let Some(Error::Divergence { .. }) = err.downcast_ref::<Error>() {
        return 3;
    }
    2
}

// ---------------------------------------------------------------------------
// scenegen
// ---------------------------------------------------------------------------

pub fn cmd_scenegen(args: &ScenegenArgs, global: &Global) -> anyhow::Result<PathBuf> {
    let mut spec: SyntheticSpec = if let Some(path) = &args.spec {
        load_json(path).with_context(|| format!("reading spec {}", path.display()))?
    } else if let Some(name) = &args.generator {
        let generator = GeneratorKind::parse(name).map_err(|e| UsageError(e.to_string()))?;
        SyntheticSpec {
            generator,
            ..Default::default()
        }
    } else {
        bail!(UsageError("scenegen needs --spec or --generator".into()));
    };
    if let Some(v) = args.gaussians {
        spec.gaussians = v;
    }
    if let Some(v) = args.frames {
        spec.frames = v;
    }
    if let Some(v) = args.cameras {
        spec.cameras = v;
    }
    if let Some(v) = args.width {
        spec.width = v;
    }
    if let Some(v) = args.height {
        spec.height = v;
    }
    if let Some(v) = args.motion_scale {
        spec.motion_scale = v;
    }
    if let Some(seed) = global.seed {
        spec.seed = seed;
    }

    let gen = generate(&spec)?;
    write_dataset(&gen, &args.out)?;
    Ok(args.out.clone())
}

/// Write a generated dataset: spec echo, ground-truth scene, trajectories,
/// per-camera files, the manifest and every frame.
pub fn write_dataset(gen: &Generated, dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir.join("frames"))
        .with_context(|| format!("creating {}", dir.display()))?;
    save_json(&gen.spec, &dir.join("spec.json"))?;
    save_scene(&gen.scene, &dir.join("scene.json"))?;
    save_json(&gen.truth_file(), &dir.join("truth.json"))?;
    for (i, cam) in gen.cameras.iter().enumerate() {
        save_camera(cam, &dir.join(format!("cam{i}.json")))?;
    }
    let mut frames = Vec::new();
    for (ti, &t) in gen.times.iter().enumerate() {
        for (ci, cam) in gen.cameras.iter().enumerate() {
            let name = format!("frames/{}", frame_file_name(ti, ci));
            let img = gen.render_truth(cam, t)?;
            img.save_ppm(&dir.join(&name))?;
            frames.push(FrameRef {
                time_idx: ti,
                cam_idx: ci,
                file: name,
            });
        }
    }
    let manifest = DatasetManifest {
        spec: gen.spec.clone(),
        times: gen.times.clone(),
        cameras: gen.cameras.clone(),
        frames,
    };
    save_json(&manifest, &dir.join("dataset.json"))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct FitOutputs {
    pub fitted_scene: PathBuf,
    pub history: PathBuf,
    pub final_loss: f64,
    pub final_psnr: f64,
}

pub fn cmd_fit(args: &FitArgs, global: &Global) -> anyhow::Result<FitOutputs> {
    let manifest: DatasetManifest = load_json(&args.data.join("dataset.json"))
        .with_context(|| format!("reading dataset manifest in {}", args.data.display()))?;

    let init: Scene = match (&args.scene, &args.spec) {
        (Some(scene), None) => load_scene(scene)?,
        (None, Some(spec_path)) => {
            let mut spec: SyntheticSpec = load_json(spec_path)?;
            if let Some(seed) = global.seed {
                spec.seed = seed;
            }
            generate(&spec)?.init_scene()?
        }
        _ => bail!(UsageError("fit needs exactly one of --scene or --spec".into())),
    };

    let mut config = match &args.config {
        Some(path) => load_json::<FitConfig>(path)
            .with_context(|| format!("reading fit config {}", path.display()))?,
        None => FitConfig::default(),
    };
    if let Some(v) = args.iterations {
        config.iterations = v;
    }
    if let Some(v) = args.lambda_ssim {
        config.lambda_ssim = v;
    }
    if let Some(v) = args.batch_size {
        config.batch_size = v;
    }
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    config.deterministic |= global.deterministic;
    config.flags = AblationFlags {
        time_opacity: config.flags.time_opacity && !args.no_time_opacity,
        time_motion: config.flags.time_motion && !args.no_time_motion,
        time_rotation: config.flags.time_rotation && !args.no_time_rotation,
        time_scale: config.flags.time_scale && !args.no_time_scale,
        peano_remainder: config.flags.peano_remainder && !args.no_peano_remainder,
    };

    let train = load_train_set(&args.data, &manifest, &args.holdout_cam)?;
    let result = fit(init, &train, &config)?;

    std::fs::create_dir_all(&args.out)?;
    let scene_path = args.out.join("fitted_scene.json");
    save_scene(&result.scene, &scene_path)?;
    let history_path = args.out.join("history.csv");
    std::fs::write(&history_path, history_to_csv(&result.history))?;
    let (final_loss, final_psnr) = result
        .history
        .last()
        .map(|r| (r.loss, r.psnr))
        .unwrap_or((0.0, f64::NAN));
    Ok(FitOutputs {
        fitted_scene: scene_path,
        history: history_path,
        final_loss,
        final_psnr,
    })
}

/// Load the declared frames, excluding held-out cameras. Missing files are
/// reported together.
pub fn load_train_set(
    dir: &Path,
    manifest: &DatasetManifest,
    holdout_cams: &[usize],
) -> anyhow::Result<TrainSet> {
    let mut samples = Vec::new();
    let mut missing = Vec::new();
    for frame in &manifest.frames {
        if holdout_cams.contains(&frame.cam_idx) {
            continue;
        }
        let path = dir.join(&frame.file);
        if !path.is_file() {
            missing.push(frame.file.clone());
            continue;
        }
        let img = ImageBuffer::load(&path)?;
        samples.push(TrainSample {
            cam: frame.cam_idx,
            t: manifest.times[frame.time_idx],
            target: img.to_f64(),
            name: frame.file.clone(),
        });
    }
    if !missing.is_empty() {
        return Err(Error::MissingFrames(missing).into());
    }
    Ok(TrainSet {
        cameras: manifest.cameras.clone(),
        samples,
    })
}

// ---------------------------------------------------------------------------
// render
// ---------------------------------------------------------------------------

pub fn cmd_render(args: &RenderArgs, _global: &Global) -> anyhow::Result<Vec<PathBuf>> {
    let scene = load_scene(&args.scene)?;
    let cam = load_camera(&args.camera)?;

    let times: Vec<f64> = match (args.t, args.t_start, args.t_end, args.steps) {
        (Some(t), None, None, None) => vec![t],
        (None, Some(start), Some(end), Some(steps)) => {
            if steps == 0 {
                bail!(UsageError("--steps must be at least 1".into()));
            }
            if steps == 1 {
                vec![start]
            } else {
                (0..steps)
                    .map(|k| start + (end - start) * k as f64 / (steps - 1) as f64)
                    .collect()
            }
        }
        _ => bail!(UsageError(
            "render needs either --t or all of --t-start, --t-end, --steps".into()
        )),
    };
    for &t in &times {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::TimeOutOfRange(t).into());
        }
    }

    let format = match args.format.as_deref() {
        None | Some("ppm") => "ppm",
        Some("png") => "png",
        Some(other) => bail!(UsageError(format!("unknown format '{other}'"))),
    };

    let mut written = Vec::new();
    if times.len() == 1 && args.t.is_some() {
        let img = render(&scene, &cam, times[0])?;
        save_by_extension(&img, &args.out)?;
        written.push(args.out.clone());
    } else {
        std::fs::create_dir_all(&args.out)?;
        for (i, &t) in times.iter().enumerate() {
            let img = render(&scene, &cam, t)?;
            let path = args.out.join(format!("frame_{i:04}.{format}"));
            save_by_extension(&img, &path)?;
            written.push(path);
        }
    }
    Ok(written)
}

fn save_by_extension(img: &ImageBuffer, path: &Path) -> anyhow::Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") => img.save_png(path)?,
        _ => img.save_ppm(path)?,
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

pub fn cmd_eval(args: &EvalArgs, _global: &Global) -> anyhow::Result<MetricReport> {
    let renders = frame_files(&args.renders)?;
    let truth = frame_files(&args.truth)?;

    let mut unpaired: Vec<String> = Vec::new();
    for name in renders.keys() {
        if !truth.contains_key(name) {
            unpaired.push(format!("{name} (no reference)"));
        }
    }
    for name in truth.keys() {
        if !renders.contains_key(name) {
            unpaired.push(format!("{name} (no render)"));
        }
    }
    if !unpaired.is_empty() {
        return Err(Error::UnpairedFrames(unpaired).into());
    }
    if renders.is_empty() {
        bail!(UsageError("no frames found to evaluate".into()));
    }

    let mut frames = Vec::new();
    for (name, render_path) in &renders {
        let a = ImageBuffer::load(render_path)?;
        let b = ImageBuffer::load(&truth[name])?;
        frames.push(FrameMetrics {
            name: name.clone(),
            psnr: psnr(&a, &b)?,
            ssim: ssim(&a, &b)?,
        });
    }
    let report = MetricReport::from_frames(frames);
    match &args.out {
        Some(path) => {
            std::fs::write(path, report.to_csv())?;
            print!("{}", report.to_table());
        }
        None => print!("{}", report.to_csv()),
    }
    Ok(report)
}

/// Image files in a directory keyed by file stem, sorted.
fn frame_files(dir: &Path) -> anyhow::Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    let entries = std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))?;
    for entry in entries {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if matches!(ext, "ppm" | "png") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), path.clone());
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub method: String,
    pub psnr: f64,
    pub ssim: f64,
}

/// Row order fixed: the five single-component ablations, full model last.
pub fn ablation_rows() -> Vec<(&'static str, AblationFlags)> {
    let on = AblationFlags::default();
    vec![
        ("w/o time-opacity", AblationFlags { time_opacity: false, ..on }),
        ("w/o time-motion", AblationFlags { time_motion: false, ..on }),
        ("w/o time-rotation", AblationFlags { time_rotation: false, ..on }),
        ("w/o time-scale", AblationFlags { time_scale: false, ..on }),
        ("w/o peano-remainder", AblationFlags { peano_remainder: false, ..on }),
        ("full", on),
    ]
}

pub fn cmd_ablate(args: &AblateArgs, global: &Global) -> anyhow::Result<Vec<AblationRow>> {
    let mut spec: SyntheticSpec = load_json(&args.spec)?;
    if let Some(seed) = global.seed {
        spec.seed = seed;
    }
    let mut config = match &args.config {
        Some(path) => load_json::<FitConfig>(path)?,
        None => FitConfig::default(),
    };
    if let Some(v) = args.iterations {
        config.iterations = v;
    }
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    config.deterministic |= global.deterministic;

    let gen = generate(&spec)?;
    let data_dir = args.out.join("dataset");
    write_dataset(&gen, &data_dir)?;
    let manifest: DatasetManifest = load_json(&data_dir.join("dataset.json"))?;
    let train = load_train_set(&data_dir, &manifest, &[])?;

    // Rows are scored on the training views: at this data scale the sweep
    // measures what each component lets the model represent, and held-out
    // noise would drown the per-component differences.
    let mut rows = Vec::new();
    for (label, flags) in ablation_rows() {
        let mut row_config = config.clone();
        row_config.flags = flags;
        let init = gen.init_scene()?;
        let result = fit(init, &train, &row_config)?;

        let mut psnr_sum = 0.0;
        let mut ssim_sum = 0.0;
        let mut n = 0.0;
        for (ti, &t) in gen.times.iter().enumerate() {
            for (ci, cam) in gen.cameras.iter().enumerate() {
                let rendered = render(&result.scene, cam, t)?;
                let reference = ImageBuffer::load(
                    &data_dir.join(format!("frames/{}", frame_file_name(ti, ci))),
                )?;
                psnr_sum += psnr(&rendered, &reference)?;
                ssim_sum += ssim(&rendered, &reference)?;
                n += 1.0;
            }
        }
        let row = AblationRow {
            method: label.to_string(),
            psnr: psnr_sum / n,
            ssim: ssim_sum / n,
        };
        log::info!("{}: psnr {:.2} dB, ssim {:.4}", row.method, row.psnr, row.ssim);
        let slug = label.replace(['/', ' '], "_");
        let fit_dir = args.out.join(format!("fit_{slug}"));
        std::fs::create_dir_all(&fit_dir)?;
        save_scene(&result.scene, &fit_dir.join("fitted_scene.json"))?;
        std::fs::write(fit_dir.join("history.csv"), history_to_csv(&result.history))?;
        rows.push(row);
    }

    let mut csv = String::from("method,psnr,ssim\n");
    let mut table = format!("{:<22} {:>9} {:>8}\n", "method", "psnr(db)", "ssim");
    for row in &rows {
        writeln!(csv, "{},{:.4},{:.6}", row.method, row.psnr, row.ssim).unwrap();
        writeln!(table, "{:<22} {:>9.2} {:>8.4}", row.method, row.psnr, row.ssim).unwrap();
    }
    std::fs::write(args.out.join("ablation.csv"), csv)?;
    print!("{table}");
    Ok(rows)
}
