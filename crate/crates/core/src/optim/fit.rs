//! Gradient-descent fitting of all learnable parameters against reference
//! frames.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::psnr_f64;
use crate::optim::adam::Adam;
use crate::optim::backward::{gradient, Sample};
use crate::optim::params::{apply_ablations, AblationFlags, Group, ParamLayout};
use crate::scene::{Camera, Scene};

/// Per-group learning rates.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningRates {
    pub position: f64,
    /// Position rate decays exponentially to `position * position_final_factor`
    /// across the run.
    pub position_final_factor: f64,
    pub scale: f64,
    pub rotation: f64,
    /// Opacity group: stationary opacity, temporal scale and temporal center.
    pub opacity: f64,
    /// The opacity rate decays to `opacity * opacity_final_factor`; the hot
    /// initial rate otherwise limit-cycles once the fit reaches the noise
    /// floor.
    pub opacity_final_factor: f64,
    pub color: f64,
    pub t_center: f64,
    pub radii: f64,
    pub net: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates {
            position: 1.6e-3,
            position_final_factor: 0.01,
            scale: 5e-3,
            rotation: 1e-3,
            opacity: 5e-2,
            opacity_final_factor: 0.1,
            color: 1e-2,
            t_center: 1e-3,
            radii: 1e-3,
            net: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub iterations: usize,
    /// Weight of the structural term in `(1-λ) L1 + λ (1-SSIM)`.
    pub lambda_ssim: f64,
    pub learning_rates: LearningRates,
    pub flags: AblationFlags,
    pub seed: u64,
    /// Samples drawn per iteration; gradients are averaged in draw order.
    pub batch_size: usize,
    /// Forces sequential batch evaluation. Results are identical either
    /// way; this only trades speed for stricter scheduling.
    pub deterministic: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            iterations: 2000,
            lambda_ssim: 0.2,
            learning_rates: LearningRates::default(),
            flags: AblationFlags::default(),
            seed: 0,
            batch_size: 1,
            deterministic: false,
        }
    }
}

/// One training observation: camera index into the set, normalized time,
/// and the reference frame as flat f64 RGB.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub cam: usize,
    pub t: f64,
    pub target: Vec<f64>,
    /// Label used in diagnostics.
    pub name: String,
}

#[derive(Debug, Clone)]
pub struct TrainSet {
    pub cameras: Vec<Camera>,
    pub samples: Vec<TrainSample>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub loss: f64,
    pub psnr: f64,
}

pub struct FitResult {
    pub scene: Scene,
    pub history: Vec<HistoryRow>,
}

pub fn history_to_csv(history: &[HistoryRow]) -> String {
    let mut s = String::from("iteration,loss,psnr\n");
    for row in history {
        s.push_str(&format!("{},{:.9},{:.4}\n", row.iteration, row.loss, row.psnr));
    }
    s
}

const DIVERGENCE_FACTOR: f64 = 1e3;
const DIVERGENCE_PATIENCE: usize = 100;

/// Fit the scene to the training set. Zero iterations returns the scene
/// unchanged. Aborts with a divergence error when the loss exceeds
/// 1000x the initial loss for 100 consecutive iterations.
pub fn fit(mut scene: Scene, train: &TrainSet, config: &FitConfig) -> Result<FitResult> {
    if config.iterations == 0 {
        return Ok(FitResult {
            scene,
            history: Vec::new(),
        });
    }
    if train.samples.is_empty() {
        return Err(Error::Malformed {
            what: "training set".into(),
            detail: "at least one sample is required".into(),
        });
    }
    for s in &train.samples {
        let cam = &train.cameras[s.cam];
        if s.target.len() != 3 * cam.width * cam.height {
            return Err(Error::Malformed {
                what: "training sample".into(),
                detail: format!("{}: target size does not match camera", s.name),
            });
        }
    }

    let layout = ParamLayout::of(&scene);
    let mut params = layout.pack(&scene);
    let frozen = apply_ablations(&config.flags, &layout, &mut params);
    let mut adam = Adam::new(layout.total);
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(config.seed);

    // Per-coordinate base learning rates; the position spans decay.
    let lr = &config.learning_rates;
    let base_lrs: Vec<f64> = (0..layout.total)
        .map(|i| match layout.group_of(i) {
            Group::PosCoeffs => lr.position,
            Group::ScaleCoeffs => lr.scale,
            Group::RotCoeffs => lr.rotation,
            Group::SigmaS | Group::STau | Group::MuTau => lr.opacity,
            Group::TCenter => lr.t_center,
            Group::Color => lr.color,
            Group::Radii => lr.radii,
            Group::Net => lr.net,
        })
        .collect();
    let pos_coords: Vec<usize> = layout
        .gaussians
        .iter()
        .flat_map(|s| s.pos.0..s.pos.0 + s.pos.1)
        .collect();
    let opacity_coords: Vec<usize> = layout
        .gaussians
        .iter()
        .flat_map(|s| [s.sigma_s, s.s_tau, s.mu_tau])
        .collect();
    let mut lrs = base_lrs.clone();

    let batch = config.batch_size.max(1);
    let mut history = Vec::with_capacity(config.iterations);
    let mut initial_loss: Option<f64> = None;
    let mut divergent_streak = 0usize;

    for iter in 0..config.iterations {
        if config.iterations > 1 {
            let progress = iter as f64 / (config.iterations - 1) as f64;
            let factor = lr.position_final_factor.powf(progress);
            for &i in &pos_coords {
                lrs[i] = base_lrs[i] * factor;
            }
            let op_factor = lr.opacity_final_factor.powf(progress);
            for &i in &opacity_coords {
                lrs[i] = base_lrs[i] * op_factor;
            }
        }

        let picks: Vec<usize> = (0..batch)
            .map(|_| rand::Rng::gen_range(&mut rng, 0..train.samples.len()))
            .collect();
        layout.unpack(&params, &mut scene)?;

        let outputs: Vec<_> = if config.deterministic || batch == 1 {
            picks
                .iter()
                .map(|&p| {
                    let s = &train.samples[p];
                    let sample = Sample {
                        cam: &train.cameras[s.cam],
                        t: s.t,
                        target: &s.target,
                    };
                    gradient(&scene, &layout, &sample, config.lambda_ssim, Some(&frozen))
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            picks
                .par_iter()
                .map(|&p| {
                    let s = &train.samples[p];
                    let sample = Sample {
                        cam: &train.cameras[s.cam],
                        t: s.t,
                        target: &s.target,
                    };
                    gradient(&scene, &layout, &sample, config.lambda_ssim, Some(&frozen))
                })
                .collect::<Result<Vec<_>>>()?
        };

        // Fixed-order reduction keeps runs reproducible.
        let inv_b = 1.0 / outputs.len() as f64;
        let mut grads = vec![0.0f64; layout.total];
        let mut loss = 0.0;
        for out in &outputs {
            loss += out.loss * inv_b;
            for (g, o) in grads.iter_mut().zip(&out.grad) {
                *g += o * inv_b;
            }
        }
        let psnr = psnr_f64(&outputs[0].rendered, &train.samples[picks[0]].target);

        // Floor the reference so a near-perfect start cannot turn ordinary
        // noise into a spurious divergence abort.
        let reference = *initial_loss.get_or_insert(loss.max(1e-6));
        if loss > DIVERGENCE_FACTOR * reference {
            divergent_streak += 1;
            if divergent_streak >= DIVERGENCE_PATIENCE {
                return Err(Error::Divergence {
                    loss,
                    initial: reference,
                    factor: DIVERGENCE_FACTOR,
                    iters: divergent_streak,
                });
            }
        } else {
            divergent_streak = 0;
        }

        adam.step(&mut params, &grads, &lrs, &frozen);
        project_params(&layout, &mut params);
        history.push(HistoryRow {
            iteration: iter,
            loss,
            psnr,
        });
    }

    layout.unpack(&params, &mut scene)?;
    Ok(FitResult { scene, history })
}

/// Keep parameters inside their domains after each step.
fn project_params(layout: &ParamLayout, params: &mut [f64]) {
    for s in &layout.gaussians {
        params[s.sigma_s] = params[s.sigma_s].clamp(1e-3, 1.0);
        params[s.s_tau] = params[s.s_tau].clamp(0.0, 1e4);
        params[s.mu_tau] = params[s.mu_tau].clamp(0.0, 1.0);
        for i in s.color.0..s.color.0 + 3 {
            params[i] = params[i].clamp(0.0, 1.0);
        }
        // Canonical scale must stay positive (the evaluator clamps too, but
        // the stored primitive should remain valid on its own).
        for i in s.scale.0..s.scale.0 + 3 {
            params[i] = params[i].max(1e-4);
        }
        // Rescaling every rotation coefficient by a positive constant leaves
        // the evaluated rotation unchanged; use that to keep the zeroth
        // coefficient well-conditioned.
        let n0 = (params[s.rot.0].powi(2)
            + params[s.rot.0 + 1].powi(2)
            + params[s.rot.0 + 2].powi(2)
            + params[s.rot.0 + 3].powi(2))
        .sqrt();
        if n0 > 1e-12 && !(0.5..=2.0).contains(&n0) {
            let inv = 1.0 / n0;
            for i in s.rot.0..s.rot.0 + s.rot.1 {
                params[i] *= inv;
            }
        }
    }
    for i in layout.radii.0..layout.radii.0 + layout.radii.1 {
        params[i] = params[i].max(1e-4);
    }
}
