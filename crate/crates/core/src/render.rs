//! Deterministic CPU tile rasterizer: perspective projection of 3D
//! Gaussians to image-plane splats via the affine (EWA) Jacobian, then
//! front-to-back alpha compositing per pixel.
//!
//! Determinism contract: per-pixel composition order is fixed by a global
//! (depth, index) sort, so tile-parallel execution is bit-identical to
//! sequential execution.

use rayon::prelude::*;

use crate::deform::{eval_full_transform_with, gp_offsets};
use crate::error::Result;
use crate::img::ImageBuffer;
use crate::math::{build_covariance, Mat2Sym, Mat3, Vec3};
use crate::scene::{Camera, Scene};

/// Camera-space z at or below which a Gaussian is culled.
pub const NEAR_PLANE: f64 = 0.01;
/// Low-pass dilation added to the projected covariance diagonal (px^2).
pub const COV_DILATION: f64 = 0.3;
/// Per-splat alpha ceiling.
pub const ALPHA_CLAMP: f64 = 0.999;
/// Compositing stops once transmittance falls below this.
pub const TRANSMITTANCE_EPS: f64 = 1e-4;
/// Splat extent in standard deviations for the bounding box.
pub const EXTENT_SIGMA: f64 = 3.0;
/// Tile edge in pixels.
pub const TILE_SIZE: usize = 16;

/// A projected Gaussian on the image plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Splat2D {
    /// Projected center in pixels.
    pub mu_img: [f64; 2],
    /// Projected covariance (px^2), dilated.
    pub cov_img: Mat2Sym,
    /// Camera-space depth.
    pub depth: f64,
    pub color: Vec3,
    /// Time-dependent opacity at this frame, in [0, 1].
    pub alpha_base: f64,
}

impl Splat2D {
    /// Axis-aligned half extents of the EXTENT_SIGMA ellipse.
    pub fn half_extents(&self) -> (f64, f64) {
        (
            EXTENT_SIGMA * self.cov_img.a.max(0.0).sqrt(),
            EXTENT_SIGMA * self.cov_img.c.max(0.0).sqrt(),
        )
    }
}

/// Projection intermediates kept for the backward pass.
#[derive(Debug, Clone, Copy)]
pub struct ProjectedSplat {
    pub splat: Splat2D,
    /// Camera-space position.
    pub x_cam: Vec3,
    /// Combined Jacobian-times-rotation `M = J W`, rows of the 2x3 map
    /// from world offsets to pixel offsets.
    pub m: [[f64; 3]; 2],
    /// Inverse of the dilated projected covariance.
    pub cov_inv: Mat2Sym,
}

/// Project a world-space Gaussian into a 2D splat. Returns `None` when the
/// Gaussian is culled (behind the near plane); culling is a normal outcome.
pub fn project_gaussian(mu_w: Vec3, cov_w: &Mat3, cam: &Camera) -> Option<Splat2D> {
    project_gaussian_detailed(mu_w, cov_w, cam, Vec3::ZERO, 0.0).map(|p| p.splat)
}

/// Projection with intermediates; `color` and `alpha_base` are stored into
/// the resulting splat.
pub fn project_gaussian_detailed(
    mu_w: Vec3,
    cov_w: &Mat3,
    cam: &Camera,
    color: Vec3,
    alpha_base: f64,
) -> Option<ProjectedSplat> {
    let w_cw = cam.rotation_matrix();
    let x_cam = w_cw.mul_vec(mu_w) + cam.trans;
    if x_cam.z <= NEAR_PLANE {
        return None;
    }
    let (x, y, z) = (x_cam.x, x_cam.y, x_cam.z);
    let inv_z = 1.0 / z;
    let mu_img = [cam.fx * x * inv_z + cam.cx, cam.fy * y * inv_z + cam.cy];

    // Affine approximation of the perspective map at x_cam.
    let j = [
        [cam.fx * inv_z, 0.0, -cam.fx * x * inv_z * inv_z],
        [0.0, cam.fy * inv_z, -cam.fy * y * inv_z * inv_z],
    ];
    // M = J W, a 2x3 map from world to pixels.
    let mut m = [[0.0; 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            m[r][c] = j[r][0] * w_cw.m[0][c] + j[r][1] * w_cw.m[1][c] + j[r][2] * w_cw.m[2][c];
        }
    }
    // Sigma_img = M Sigma_w M^T + dilation.
    let mut ms = [[0.0; 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            ms[r][c] = m[r][0] * cov_w.m[0][c] + m[r][1] * cov_w.m[1][c] + m[r][2] * cov_w.m[2][c];
        }
    }
    let cov_img = Mat2Sym {
        a: ms[0][0] * m[0][0] + ms[0][1] * m[0][1] + ms[0][2] * m[0][2] + COV_DILATION,
        b: ms[0][0] * m[1][0] + ms[0][1] * m[1][1] + ms[0][2] * m[1][2],
        c: ms[1][0] * m[1][0] + ms[1][1] * m[1][1] + ms[1][2] * m[1][2] + COV_DILATION,
    };
    let cov_inv = cov_img.inverse().ok()?;
    Some(ProjectedSplat {
        splat: Splat2D {
            mu_img,
            cov_img,
            depth: z,
            color,
            alpha_base,
        },
        x_cam,
        m,
        cov_inv,
    })
}

/// Front-to-back alpha blending of pre-sorted, pre-clamped splats over a
/// background color. Compositing stops once transmittance drops below
/// `TRANSMITTANCE_EPS`; the background is weighted by the remaining
/// transmittance.
pub fn composite_pixel(splats: &[(Vec3, f64)], background: Vec3) -> Vec3 {
    let mut color = Vec3::ZERO;
    let mut transmittance = 1.0;
    for (c, alpha) in splats {
        if transmittance < TRANSMITTANCE_EPS {
            break;
        }
        debug_assert!((0.0..1.0).contains(alpha));
        color += *c * (*alpha * transmittance);
        transmittance *= 1.0 - *alpha;
    }
    color + background * transmittance
}

/// Transform every Gaussian to time `t`, project, and sort by
/// (depth, index). Culled Gaussians are dropped.
pub fn prepare_splats(scene: &Scene, cam: &Camera, t: f64) -> Result<Vec<(usize, ProjectedSplat)>> {
    let offsets = gp_offsets(&scene.controls.net, t);
    let mut out = Vec::with_capacity(scene.gaussians.len());
    for (i, g) in scene.gaussians.iter().enumerate() {
        let e = eval_full_transform_with(g, t, &scene.controls, &scene.neighbors.rows[i], &offsets)?;
        if e.temporal_opacity <= 0.0 {
            continue;
        }
        let cov = build_covariance(e.rotation, e.scale)?;
        if let Some(p) = project_gaussian_detailed(e.position, &cov, cam, g.color, e.temporal_opacity) {
            out.push((i, p));
        }
    }
    out.sort_by(|a, b| {
        a.1.splat
            .depth
            .total_cmp(&b.1.splat.depth)
            .then(a.0.cmp(&b.0))
    });
    Ok(out)
}

/// Indices of splats (into an ordered splat list) touching each tile.
pub(crate) struct TileBins {
    pub tiles_x: usize,
    pub bins: Vec<Vec<usize>>,
}

pub(crate) fn bin_splats(splats: &[(usize, ProjectedSplat)], width: usize, height: usize) -> TileBins {
    let tiles_x = width.div_ceil(TILE_SIZE);
    let tiles_y = height.div_ceil(TILE_SIZE);
    let mut bins = vec![Vec::new(); tiles_x * tiles_y];
    for (order, (_, p)) in splats.iter().enumerate() {
        let (rx, ry) = p.splat.half_extents();
        let [mx, my] = p.splat.mu_img;
        let x0 = (mx - rx).floor().max(0.0) as usize;
        let x1 = (mx + rx).ceil().min(width as f64 - 1.0);
        let y0 = (my - ry).floor().max(0.0) as usize;
        let y1 = (my + ry).ceil().min(height as f64 - 1.0);
        if x1 < 0.0 || y1 < 0.0 || mx + rx < 0.0 || my + ry < 0.0 || mx - rx >= width as f64
            || my - ry >= height as f64
        {
            continue;
        }
        let (x1, y1) = (x1 as usize, y1 as usize);
        for ty in (y0 / TILE_SIZE)..=(y1 / TILE_SIZE) {
            for tx in (x0 / TILE_SIZE)..=(x1 / TILE_SIZE) {
                bins[ty * tiles_x + tx].push(order);
            }
        }
    }
    TileBins { tiles_x, bins }
}

/// Per-pixel alpha of a splat at pixel center `(px, py)`, clamped.
/// `None` when the pixel lies outside the splat's extent box.
#[inline]
pub(crate) fn splat_alpha_at(p: &ProjectedSplat, px: f64, py: f64) -> Option<f64> {
    let (rx, ry) = p.splat.half_extents();
    let dx = px - p.splat.mu_img[0];
    let dy = py - p.splat.mu_img[1];
    if dx.abs() > rx || dy.abs() > ry {
        return None;
    }
    let power = -0.5 * p.cov_inv.quad_form(dx, dy);
    Some((p.splat.alpha_base * power.exp()).min(ALPHA_CLAMP))
}

/// Render the scene at time `t`. Bit-deterministic for fixed inputs,
/// including under tile-parallel execution.
pub fn render(scene: &Scene, cam: &Camera, t: f64) -> Result<ImageBuffer> {
    let data = render_f64(scene, cam, t)?;
    Ok(ImageBuffer::from_f64(cam.width, cam.height, &data))
}

/// Double-precision render used by the fitting and evaluation paths.
pub fn render_f64(scene: &Scene, cam: &Camera, t: f64) -> Result<Vec<f64>> {
    cam.validate()?;
    let splats = prepare_splats(scene, cam, t)?;
    let bins = bin_splats(&splats, cam.width, cam.height);
    let bg = scene.background;

    let tile_buffers: Vec<Vec<f64>> = (0..bins.bins.len())
        .into_par_iter()
        .map(|tile| {
            let tx = tile % bins.tiles_x;
            let ty = tile / bins.tiles_x;
            let x0 = tx * TILE_SIZE;
            let y0 = ty * TILE_SIZE;
            let w = TILE_SIZE.min(cam.width - x0);
            let h = TILE_SIZE.min(cam.height - y0);
            let mut buf = vec![0.0f64; 3 * w * h];
            let mut scratch: Vec<(Vec3, f64)> = Vec::new();
            for yy in 0..h {
                for xx in 0..w {
                    let px = (x0 + xx) as f64 + 0.5;
                    let py = (y0 + yy) as f64 + 0.5;
                    scratch.clear();
                    for &order in &bins.bins[tile] {
                        let p = &splats[order].1;
                        if let Some(alpha) = splat_alpha_at(p, px, py) {
                            scratch.push((p.splat.color, alpha));
                        }
                    }
                    let c = composite_pixel(&scratch, bg);
                    let o = 3 * (yy * w + xx);
                    buf[o] = c.x;
                    buf[o + 1] = c.y;
                    buf[o + 2] = c.z;
                }
            }
            buf
        })
        .collect();

    let mut out = vec![0.0f64; 3 * cam.width * cam.height];
    for (tile, buf) in tile_buffers.iter().enumerate() {
        let tx = tile % bins.tiles_x;
        let ty = tile / bins.tiles_x;
        let x0 = tx * TILE_SIZE;
        let y0 = ty * TILE_SIZE;
        let w = TILE_SIZE.min(cam.width - x0);
        let h = TILE_SIZE.min(cam.height - y0);
        for yy in 0..h {
            let src = 3 * yy * w;
            let dst = 3 * ((y0 + yy) * cam.width + x0);
            out[dst..dst + 3 * w].copy_from_slice(&buf[src..src + 3 * w]);
        }
    }
    Ok(out)
}
