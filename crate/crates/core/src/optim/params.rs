//! Flat parameter vector over a scene, with a span registry mapping
//! coordinates back to named groups, and freeze masks for ablations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::scene::Scene;

/// Named parameter groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    PosCoeffs,
    ScaleCoeffs,
    RotCoeffs,
    SigmaS,
    STau,
    MuTau,
    TCenter,
    Color,
    Radii,
    Net,
}

/// Per-gaussian coordinate spans, `(start, len)`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianSpans {
    pub pos: (usize, usize),
    pub scale: (usize, usize),
    pub rot: (usize, usize),
    pub sigma_s: usize,
    pub s_tau: usize,
    pub mu_tau: usize,
    pub t_center: usize,
    pub color: (usize, usize),
}

/// Registry of spans covering the whole vector, disjointly.
#[derive(Debug, Clone)]
pub struct ParamLayout {
    pub gaussians: Vec<GaussianSpans>,
    pub radii: (usize, usize),
    pub net: (usize, usize),
    pub total: usize,
}

impl ParamLayout {
    pub fn of(scene: &Scene) -> ParamLayout {
        let mut off = 0usize;
        let mut gaussians = Vec::with_capacity(scene.gaussians.len());
        for g in &scene.gaussians {
            let pos = (off, 3 * (g.pos_coeffs.order() + 1));
            off += pos.1;
            let scale = (off, 3 * (g.scale_coeffs.order() + 1));
            off += scale.1;
            let rot = (off, 4 * (g.rot_coeffs.order() + 1));
            off += rot.1;
            let sigma_s = off;
            let s_tau = off + 1;
            let mu_tau = off + 2;
            let t_center = off + 3;
            off += 4;
            let color = (off, 3);
            off += 3;
            gaussians.push(GaussianSpans {
                pos,
                scale,
                rot,
                sigma_s,
                s_tau,
                mu_tau,
                t_center,
                color,
            });
        }
        let radii = (off, scene.controls.radii.len());
        off += radii.1;
        let net = (off, scene.controls.net.param_count());
        off += net.1;
        ParamLayout {
            gaussians,
            radii,
            net,
            total: off,
        }
    }

    /// Flatten the scene's learnable parameters. Exact round-trip with
    /// [`ParamLayout::unpack`].
    pub fn pack(&self, scene: &Scene) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total);
        for g in &scene.gaussians {
            for c in &g.pos_coeffs.coeffs {
                out.extend_from_slice(c);
            }
            for c in &g.scale_coeffs.coeffs {
                out.extend_from_slice(c);
            }
            for c in &g.rot_coeffs.coeffs {
                out.extend_from_slice(c);
            }
            out.push(g.sigma_s);
            out.push(g.s_tau);
            out.push(g.mu_tau);
            out.push(g.t_center);
            out.extend_from_slice(&g.color.to_array());
        }
        out.extend_from_slice(&scene.controls.radii);
        scene.controls.net.flatten(&mut out);
        debug_assert_eq!(out.len(), self.total);
        out
    }

    /// Write parameters back into the scene. Keeps the frozen canonical
    /// neighbor table untouched; syncs the duplicated canonical fields.
    pub fn unpack(&self, params: &[f64], scene: &mut Scene) -> Result<()> {
        if params.len() != self.total || self.gaussians.len() != scene.gaussians.len() {
            return Err(Error::ParamMismatch(format!(
                "layout expects {} values / {} gaussians, got {} / {}",
                self.total,
                self.gaussians.len(),
                params.len(),
                scene.gaussians.len()
            )));
        }
        for (g, spans) in scene.gaussians.iter_mut().zip(&self.gaussians) {
            let mut off = spans.pos.0;
            for c in g.pos_coeffs.coeffs.iter_mut() {
                c.copy_from_slice(&params[off..off + 3]);
                off += 3;
            }
            for c in g.scale_coeffs.coeffs.iter_mut() {
                c.copy_from_slice(&params[off..off + 3]);
                off += 3;
            }
            for c in g.rot_coeffs.coeffs.iter_mut() {
                c.copy_from_slice(&params[off..off + 4]);
                off += 4;
            }
            g.sigma_s = params[spans.sigma_s];
            g.s_tau = params[spans.s_tau];
            g.mu_tau = params[spans.mu_tau];
            g.t_center = params[spans.t_center];
            g.color = Vec3::new(
                params[spans.color.0],
                params[spans.color.0 + 1],
                params[spans.color.0 + 2],
            );
            g.sync_canonical();
        }
        let (r0, rlen) = self.radii;
        scene.controls.radii.copy_from_slice(&params[r0..r0 + rlen]);
        let (n0, nlen) = self.net;
        scene.controls.net.unflatten(&params[n0..n0 + nlen])?;
        Ok(())
    }

    /// Group of a coordinate, for per-group learning rates and reporting.
    pub fn group_of(&self, idx: usize) -> Group {
        if idx >= self.net.0 {
            return Group::Net;
        }
        if idx >= self.radii.0 {
            return Group::Radii;
        }
        // Spans are laid out in order; binary search over gaussians.
        let gi = self
            .gaussians
            .partition_point(|s| s.pos.0 <= idx)
            .saturating_sub(1);
        let s = &self.gaussians[gi];
        if idx < s.pos.0 + s.pos.1 {
            Group::PosCoeffs
        } else if idx < s.scale.0 + s.scale.1 {
            Group::ScaleCoeffs
        } else if idx < s.rot.0 + s.rot.1 {
            Group::RotCoeffs
        } else if idx == s.sigma_s {
            Group::SigmaS
        } else if idx == s.s_tau {
            Group::STau
        } else if idx == s.mu_tau {
            Group::MuTau
        } else if idx == s.t_center {
            Group::TCenter
        } else {
            Group::Color
        }
    }
}

/// Which model components stay live during fitting. All-on by default;
/// switching one off freezes its parameter group (orders >= 1 for the
/// motion polynomials) at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationFlags {
    pub time_opacity: bool,
    pub time_motion: bool,
    pub time_rotation: bool,
    pub time_scale: bool,
    pub peano_remainder: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        AblationFlags {
            time_opacity: true,
            time_motion: true,
            time_rotation: true,
            time_scale: true,
            peano_remainder: true,
        }
    }
}

impl AblationFlags {
    pub fn all_on(&self) -> bool {
        *self == AblationFlags::default()
    }
}

/// Freeze mask from ablation flags. Frozen coordinates also get zeroed in
/// `params` where the contract pins them at zero (higher-order motion
/// coefficients and the temporal opacity scale).
pub fn apply_ablations(
    flags: &AblationFlags,
    layout: &ParamLayout,
    params: &mut [f64],
) -> Vec<bool> {
    let mut frozen = vec![false; layout.total];
    for s in &layout.gaussians {
        if !flags.time_motion {
            for i in (s.pos.0 + 3)..(s.pos.0 + s.pos.1) {
                params[i] = 0.0;
                frozen[i] = true;
            }
        }
        if !flags.time_scale {
            for i in (s.scale.0 + 3)..(s.scale.0 + s.scale.1) {
                params[i] = 0.0;
                frozen[i] = true;
            }
        }
        if !flags.time_rotation {
            for i in (s.rot.0 + 4)..(s.rot.0 + s.rot.1) {
                params[i] = 0.0;
                frozen[i] = true;
            }
        }
        if !flags.time_opacity {
            params[s.s_tau] = 0.0;
            frozen[s.s_tau] = true;
        }
    }
    if !flags.peano_remainder {
        // The offset network stays at its zero-initialized state: the
        // correction field remains the identity.
        for i in layout.net.0..(layout.net.0 + layout.net.1) {
            frozen[i] = true;
        }
    }
    frozen
}
