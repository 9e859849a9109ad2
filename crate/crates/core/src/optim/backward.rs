//! Reverse-mode gradient of the photometric loss with respect to every
//! learnable parameter, hand-derived through compositing, projection,
//! covariance assembly, the polynomial motion and the skinned correction
//! field.
//!
//! The forward pass reuses the renderer's splat preparation so pixel values
//! are bit-identical to [`crate::render::render_f64`]; the backward pass
//! replays compositing per pixel and chains gradients splat by splat.

use crate::deform::{lbs_weights, NetCache};
use crate::error::{Error, Result};
use crate::math::{quat_mul, quat_to_rotmat, Mat3, Quat, Vec3};
use crate::optim::loss::loss_and_grad_f64;
use crate::optim::params::ParamLayout;
use crate::render::{bin_splats, prepare_splats, splat_alpha_at, ALPHA_CLAMP, TRANSMITTANCE_EPS};
use crate::scene::{Camera, Scene};
use crate::taylor::SCALE_FLOOR;

/// One training observation: a camera, a normalized timestamp and the
/// reference image as flat f64 RGB.
pub struct Sample<'a> {
    pub cam: &'a Camera,
    pub t: f64,
    pub target: &'a [f64],
}

#[derive(Debug)]
pub struct GradOutput {
    pub loss: f64,
    /// dLoss/dθ laid out like [`ParamLayout::pack`].
    pub grad: Vec<f64>,
    /// The rendered frame (f64), reusable for logging.
    pub rendered: Vec<f64>,
}

/// Per-splat accumulators gathered during the pixel backward pass.
#[derive(Clone)]
struct SplatGrad {
    d_color: Vec3,
    d_mu_img: [f64; 2],
    /// dL/d(Σ_img⁻¹) as a full symmetric 2x2.
    d_prec: [[f64; 2]; 2],
    d_alpha_base: f64,
}

impl SplatGrad {
    fn zero() -> Self {
        SplatGrad {
            d_color: Vec3::ZERO,
            d_mu_img: [0.0; 2],
            d_prec: [[0.0; 2]; 2],
            d_alpha_base: 0.0,
        }
    }
}

/// Analytic gradient of the loss for one sample. `frozen` coordinates are
/// masked to exactly zero in the result.
pub fn gradient(
    scene: &Scene,
    layout: &ParamLayout,
    sample: &Sample,
    lambda_ssim: f64,
    frozen: Option<&[bool]>,
) -> Result<GradOutput> {
    let cam = sample.cam;
    cam.validate()?;
    let (w, h) = (cam.width, cam.height);
    if sample.target.len() != 3 * w * h {
        return Err(Error::DimensionMismatch(w, h, sample.target.len() / 3 / h.max(1), h));
    }

    let splats = prepare_splats(scene, cam, sample.t)?;
    let bins = bin_splats(&splats, w, h);
    let bg = scene.background;

    // Forward replay: identical arithmetic to the tile renderer.
    let mut rendered = vec![0.0f64; 3 * w * h];
    for (tile, bin) in bins.bins.iter().enumerate() {
        let tx = tile % bins.tiles_x;
        let ty = tile / bins.tiles_x;
        for yy in 0..crate::render::TILE_SIZE.min(h - ty * crate::render::TILE_SIZE) {
            for xx in 0..crate::render::TILE_SIZE.min(w - tx * crate::render::TILE_SIZE) {
                let px_i = tx * crate::render::TILE_SIZE + xx;
                let py_i = ty * crate::render::TILE_SIZE + yy;
                let px = px_i as f64 + 0.5;
                let py = py_i as f64 + 0.5;
                let mut color = Vec3::ZERO;
                let mut transmittance = 1.0;
                for &order in bin {
                    if transmittance < TRANSMITTANCE_EPS {
                        break;
                    }
                    let p = &splats[order].1;
                    if let Some(alpha) = splat_alpha_at(p, px, py) {
                        color += p.splat.color * (alpha * transmittance);
                        transmittance *= 1.0 - alpha;
                    }
                }
                color += bg * transmittance;
                let o = 3 * (py_i * w + px_i);
                rendered[o] = color.x;
                rendered[o + 1] = color.y;
                rendered[o + 2] = color.z;
            }
        }
    }

    let (loss, d_image) = loss_and_grad_f64(&rendered, sample.target, w, h, lambda_ssim)?;
    if !loss.is_finite() {
        return Err(non_finite_diagnostics(scene, layout));
    }

    // Pixel backward: per-splat image-space gradients.
    let mut sgrads = vec![SplatGrad::zero(); splats.len()];
    let mut contribs: Vec<(usize, f64, f64, f64)> = Vec::new(); // (order, alpha, g_val, T_before)
    for (tile, bin) in bins.bins.iter().enumerate() {
        let tx = tile % bins.tiles_x;
        let ty = tile / bins.tiles_x;
        for yy in 0..crate::render::TILE_SIZE.min(h - ty * crate::render::TILE_SIZE) {
            for xx in 0..crate::render::TILE_SIZE.min(w - tx * crate::render::TILE_SIZE) {
                let px_i = tx * crate::render::TILE_SIZE + xx;
                let py_i = ty * crate::render::TILE_SIZE + yy;
                let px = px_i as f64 + 0.5;
                let py = py_i as f64 + 0.5;
                let o = 3 * (py_i * w + px_i);
                let dldc = Vec3::new(d_image[o], d_image[o + 1], d_image[o + 2]);

                contribs.clear();
                let mut transmittance = 1.0;
                for &order in bin {
                    if transmittance < TRANSMITTANCE_EPS {
                        break;
                    }
                    let p = &splats[order].1;
                    let dx = px - p.splat.mu_img[0];
                    let dy = py - p.splat.mu_img[1];
                    let (rx, ry) = p.splat.half_extents();
                    if dx.abs() > rx || dy.abs() > ry {
                        continue;
                    }
                    let g_val = (-0.5 * p.cov_inv.quad_form(dx, dy)).exp();
                    let alpha = (p.splat.alpha_base * g_val).min(ALPHA_CLAMP);
                    contribs.push((order, alpha, g_val, transmittance));
                    transmittance *= 1.0 - alpha;
                }
                // Suffix accumulator: contributions behind the current splat.
                let mut behind = bg * transmittance;
                for &(order, alpha, g_val, t_before) in contribs.iter().rev() {
                    let p = &splats[order].1;
                    let sg = &mut sgrads[order];
                    let c = p.splat.color;
                    sg.d_color += dldc * (alpha * t_before);
                    let d_alpha = dldc.dot(c * t_before - behind * (1.0 / (1.0 - alpha)));
                    behind += c * (alpha * t_before);
                    if p.splat.alpha_base * g_val >= ALPHA_CLAMP {
                        continue; // clamped: alpha is locally constant
                    }
                    sg.d_alpha_base += d_alpha * g_val;
                    let d_g = d_alpha * p.splat.alpha_base;
                    let dx = px - p.splat.mu_img[0];
                    let dy = py - p.splat.mu_img[1];
                    let a = &p.cov_inv;
                    let adx = a.a * dx + a.b * dy;
                    let ady = a.b * dx + a.c * dy;
                    let gg = d_g * g_val;
                    sg.d_mu_img[0] += gg * adx;
                    sg.d_mu_img[1] += gg * ady;
                    let half = -0.5 * gg;
                    sg.d_prec[0][0] += half * dx * dx;
                    sg.d_prec[0][1] += half * dx * dy;
                    sg.d_prec[1][0] += half * dy * dx;
                    sg.d_prec[1][1] += half * dy * dy;
                }
            }
        }
    }

    // Chain per-splat gradients down to the parameters.
    let mut grad = vec![0.0f64; layout.total];
    let deform = DeformForward::new(scene, sample.t);
    let w_cw = cam.rotation_matrix();
    let w_cw_t = w_cw.transpose();

    // Per-control-point accumulators.
    let gp_count = scene.controls.len();
    let mut d_r_unit = vec![[0.0f64; 4]; gp_count];
    let mut d_rot_mat = vec![Mat3::zeros(); gp_count];
    let mut d_delta = vec![Vec3::ZERO; gp_count];

    for ((gauss_idx, proj), sg) in splats.iter().zip(&sgrads) {
        let g = &scene.gaussians[*gauss_idx];
        let spans = &layout.gaussians[*gauss_idx];
        let row = &scene.neighbors.rows[*gauss_idx];
        let fwd = TransformForward::compute(g, sample.t, scene, row, &deform)?;

        // --- image-space covariance back to world covariance ---
        let a = &proj.cov_inv;
        let a_full = [[a.a, a.b], [a.b, a.c]];
        // dΣ_img = -A (dL/dA) A
        let t1 = mat2_mul(&a_full, &sg.d_prec);
        let d_cov_img = mat2_scale(&mat2_mul(&t1, &a_full), -1.0);
        // dΣ_w = Mᵀ G2 M
        let m = &proj.m;
        let mut d_cov_w = Mat3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for r in 0..2 {
                    for s in 0..2 {
                        acc += m[r][i] * d_cov_img[r][s] * m[s][j];
                    }
                }
                d_cov_w.m[i][j] = acc;
            }
        }
        // dM = 2 G2 M Σ_w
        let mut g2m = [[0.0f64; 3]; 2];
        for r in 0..2 {
            for c in 0..3 {
                g2m[r][c] = d_cov_img[r][0] * m[0][c] + d_cov_img[r][1] * m[1][c];
            }
        }
        let mut d_m = [[0.0f64; 3]; 2];
        for r in 0..2 {
            for c in 0..3 {
                let mut acc = 0.0;
                for k in 0..3 {
                    acc += g2m[r][k] * fwd.cov_w.m[k][c];
                }
                d_m[r][c] = 2.0 * acc;
            }
        }
        // dJ = dM Wᵀ
        let mut d_j = [[0.0f64; 3]; 2];
        for r in 0..2 {
            for c in 0..3 {
                let mut acc = 0.0;
                for k in 0..3 {
                    acc += d_m[r][k] * w_cw_t.m[k][c];
                }
                d_j[r][c] = acc;
            }
        }
        // x_cam gradient from J entries and from the projected center.
        let (xc, yc, zc) = (proj.x_cam.x, proj.x_cam.y, proj.x_cam.z);
        let inv_z = 1.0 / zc;
        let inv_z2 = inv_z * inv_z;
        let inv_z3 = inv_z2 * inv_z;
        let mut d_x_cam = Vec3::new(
            d_j[0][2] * (-cam.fx * inv_z2),
            d_j[1][2] * (-cam.fy * inv_z2),
            d_j[0][0] * (-cam.fx * inv_z2)
                + d_j[1][1] * (-cam.fy * inv_z2)
                + d_j[0][2] * (2.0 * cam.fx * xc * inv_z3)
                + d_j[1][2] * (2.0 * cam.fy * yc * inv_z3),
        );
        d_x_cam.x += sg.d_mu_img[0] * cam.fx * inv_z;
        d_x_cam.y += sg.d_mu_img[1] * cam.fy * inv_z;
        d_x_cam.z +=
            sg.d_mu_img[0] * (-cam.fx * xc * inv_z2) + sg.d_mu_img[1] * (-cam.fy * yc * inv_z2);
        let d_pos = w_cw_t.mul_vec(d_x_cam);

        // --- world covariance back to scale and rotation ---
        let r = &fwd.r_final;
        let rt_g3_r = r.transpose().mul(&d_cov_w).mul(r);
        let mut d_scale = Vec3::new(
            2.0 * fwd.scale.x * rt_g3_r.m[0][0],
            2.0 * fwd.scale.y * rt_g3_r.m[1][1],
            2.0 * fwd.scale.z * rt_g3_r.m[2][2],
        );
        // Clamped components do not move.
        if fwd.scale_raw.x < SCALE_FLOOR {
            d_scale.x = 0.0;
        }
        if fwd.scale_raw.y < SCALE_FLOOR {
            d_scale.y = 0.0;
        }
        if fwd.scale_raw.z < SCALE_FLOOR {
            d_scale.z = 0.0;
        }
        let s2 = Vec3::new(
            fwd.scale.x * fwd.scale.x,
            fwd.scale.y * fwd.scale.y,
            fwd.scale.z * fwd.scale.z,
        );
        let g3r = d_cov_w.mul(r);
        let mut d_r_final = Mat3::zeros();
        for i in 0..3 {
            d_r_final.m[i][0] = 2.0 * g3r.m[i][0] * s2.x;
            d_r_final.m[i][1] = 2.0 * g3r.m[i][1] * s2.y;
            d_r_final.m[i][2] = 2.0 * g3r.m[i][2] * s2.z;
        }

        // --- rotation chain: R -> q_final -> (blend, q_taylor) ---
        let d_q_final = rotmat_grad_to_quat(fwd.q_final, &d_r_final);
        let d_u = normalize_backward(fwd.u, fwd.q_final, d_q_final);
        let (d_blend_unit, d_q_taylor) = quat_mul_backward(fwd.blend, fwd.q_taylor, d_u);
        // q_taylor = normalize(q_raw)
        let d_q_raw = normalize_backward(fwd.q_raw, fwd.q_taylor, d_q_taylor);
        // blend = normalize(blend_raw)
        let d_blend_raw = normalize_backward(fwd.blend_raw, fwd.blend, d_blend_unit);

        // --- position: polynomial + skinned warp ---
        let dt = sample.t - g.t_center;
        let mut d_weight = vec![0.0f64; row.indices.len()];
        // Warp: Σ_j w_j moved_j - mu (the polynomial already carries mu once).
        let mut d_mu_warp = Vec3::ZERO;
        for (j, &gp) in row.indices.iter().enumerate() {
            let moved = fwd.moved[j];
            d_weight[j] += d_pos.dot(moved);
            let dm = d_pos * fwd.weights[j];
            let d_vec = g.mu - scene.controls.positions[gp];
            // dL/dR_j += dm ⊗ d_vec
            let rm = &mut d_rot_mat[gp];
            rm.m[0][0] += dm.x * d_vec.x;
            rm.m[0][1] += dm.x * d_vec.y;
            rm.m[0][2] += dm.x * d_vec.z;
            rm.m[1][0] += dm.y * d_vec.x;
            rm.m[1][1] += dm.y * d_vec.y;
            rm.m[1][2] += dm.y * d_vec.z;
            rm.m[2][0] += dm.z * d_vec.x;
            rm.m[2][1] += dm.z * d_vec.y;
            rm.m[2][2] += dm.z * d_vec.z;
            d_delta[gp] += dm;
            d_mu_warp += deform.rot_mats[gp].transpose().mul_vec(dm);
        }
        // Blend rotation also depends on the weights.
        for (j, &gp) in row.indices.iter().enumerate() {
            let rq = deform.unit_quats[gp];
            d_weight[j] +=
                d_blend_raw[0] * rq.w + d_blend_raw[1] * rq.x + d_blend_raw[2] * rq.y + d_blend_raw[3] * rq.z;
            let wj = fwd.weights[j];
            let dr = &mut d_r_unit[gp];
            dr[0] += d_blend_raw[0] * wj;
            dr[1] += d_blend_raw[1] * wj;
            dr[2] += d_blend_raw[2] * wj;
            dr[3] += d_blend_raw[3] * wj;
        }
        // Normalized-weight backward, then radii.
        let dot: f64 = d_weight.iter().zip(&fwd.weights).map(|(dw, w)| dw * w).sum();
        if !fwd.weights_uniform_fallback {
            for (j, &gp) in row.indices.iter().enumerate() {
                let d_raw_w = (d_weight[j] - dot) / fwd.w_raw_sum;
                let rj = scene.controls.radii[gp];
                let dij = row.distances[j];
                grad[layout.radii.0 + gp] += d_raw_w * fwd.w_raw[j] * dij * dij / (rj * rj * rj);
            }
        }

        // Position polynomial coefficients; order 0 also feeds the warp.
        let mut dtk = 1.0;
        for k in 0..=g.pos_coeffs.order() {
            let o = spans.pos.0 + 3 * k;
            grad[o] += d_pos.x * dtk;
            grad[o + 1] += d_pos.y * dtk;
            grad[o + 2] += d_pos.z * dtk;
            dtk *= dt;
        }
        let d_mu_total = d_mu_warp - d_pos;
        grad[spans.pos.0] += d_mu_total.x;
        grad[spans.pos.0 + 1] += d_mu_total.y;
        grad[spans.pos.0 + 2] += d_mu_total.z;

        // Scale polynomial coefficients (clamp-masked).
        let mut dtk = 1.0;
        for k in 0..=g.scale_coeffs.order() {
            let o = spans.scale.0 + 3 * k;
            grad[o] += d_scale.x * dtk;
            grad[o + 1] += d_scale.y * dtk;
            grad[o + 2] += d_scale.z * dtk;
            dtk *= dt;
        }

        // Rotation polynomial coefficients.
        let mut dtk = 1.0;
        for k in 0..=g.rot_coeffs.order() {
            let o = spans.rot.0 + 4 * k;
            for d in 0..4 {
                grad[o + d] += d_q_raw[d] * dtk;
            }
            dtk *= dt;
        }

        // Expansion center: all three polynomials shift with it.
        let pos_deriv = g.pos_coeffs.eval_derivative(dt);
        let scale_deriv = g.scale_coeffs.eval_derivative(dt);
        let rot_deriv = g.rot_coeffs.eval_derivative(dt);
        let mut d_tc = d_pos.x * pos_deriv[0] + d_pos.y * pos_deriv[1] + d_pos.z * pos_deriv[2];
        d_tc += d_scale.x * scale_deriv[0] + d_scale.y * scale_deriv[1] + d_scale.z * scale_deriv[2];
        for d in 0..4 {
            d_tc += d_q_raw[d] * rot_deriv[d];
        }
        grad[spans.t_center] -= d_tc;

        // Temporal opacity.
        let dt_op = sample.t - g.mu_tau;
        let e = (-g.s_tau * dt_op * dt_op).exp();
        grad[spans.sigma_s] += sg.d_alpha_base * e;
        grad[spans.s_tau] += sg.d_alpha_base * g.sigma_s * e * (-dt_op * dt_op);
        grad[spans.mu_tau] += sg.d_alpha_base * g.sigma_s * e * (2.0 * g.s_tau * dt_op);

        // Color.
        grad[spans.color.0] += sg.d_color.x;
        grad[spans.color.0 + 1] += sg.d_color.y;
        grad[spans.color.0 + 2] += sg.d_color.z;
    }

    // Control-point head gradients into the network.
    let net = &scene.controls.net;
    let net_grad = &mut grad[layout.net.0..layout.net.0 + layout.net.1];
    for gp in 0..gp_count {
        let from_mat = rotmat_grad_to_quat(deform.unit_quats[gp], &d_rot_mat[gp]);
        let d_unit = [
            d_r_unit[gp][0] + from_mat[0],
            d_r_unit[gp][1] + from_mat[1],
            d_r_unit[gp][2] + from_mat[2],
            d_r_unit[gp][3] + from_mat[3],
        ];
        let d_raw = normalize_backward(deform.raw_quats[gp], deform.unit_quats[gp], d_unit);
        let d_out = [
            d_raw[0],
            d_raw[1],
            d_raw[2],
            d_raw[3],
            d_delta[gp].x,
            d_delta[gp].y,
            d_delta[gp].z,
        ];
        net.backward(gp, &deform.caches[gp], &d_out, net_grad);
    }

    if let Some(mask) = frozen {
        for (g, m) in grad.iter_mut().zip(mask) {
            if *m {
                *g = 0.0;
            }
        }
    }
    Ok(GradOutput { loss, grad, rendered })
}

/// Forward state of the offset network at one timestamp.
struct DeformForward {
    caches: Vec<NetCache>,
    raw_quats: Vec<Quat>,
    unit_quats: Vec<Quat>,
    deltas: Vec<Vec3>,
    rot_mats: Vec<Mat3>,
}

impl DeformForward {
    fn new(scene: &Scene, t: f64) -> DeformForward {
        let net = &scene.controls.net;
        let te = net.time_embedding(t);
        let mut caches = Vec::with_capacity(net.gp_count);
        let mut raw_quats = Vec::with_capacity(net.gp_count);
        let mut unit_quats = Vec::with_capacity(net.gp_count);
        let mut deltas = Vec::with_capacity(net.gp_count);
        let mut rot_mats = Vec::with_capacity(net.gp_count);
        for gp in 0..net.gp_count {
            let (out, cache) = net.forward_with_embed(gp, &te);
            let raw = Quat::new(1.0 + out[0], out[1], out[2], out[3]);
            let unit = raw.normalize().expect("offset quat nonzero");
            caches.push(cache);
            raw_quats.push(raw);
            unit_quats.push(unit);
            deltas.push(Vec3::new(out[4], out[5], out[6]));
            rot_mats.push(quat_to_rotmat(unit).expect("unit quat"));
        }
        DeformForward {
            caches,
            raw_quats,
            unit_quats,
            deltas,
            rot_mats,
        }
    }
}

/// Per-gaussian forward intermediates for the backward chain.
struct TransformForward {
    scale_raw: Vec3,
    scale: Vec3,
    q_raw: Quat,
    q_taylor: Quat,
    blend_raw: Quat,
    blend: Quat,
    u: Quat,
    q_final: Quat,
    r_final: Mat3,
    cov_w: Mat3,
    weights: Vec<f64>,
    w_raw: Vec<f64>,
    w_raw_sum: f64,
    weights_uniform_fallback: bool,
    moved: Vec<Vec3>,
}

impl TransformForward {
    fn compute(
        g: &crate::scene::Gaussian4D,
        t: f64,
        scene: &Scene,
        row: &crate::deform::NeighborRow,
        deform: &DeformForward,
    ) -> Result<TransformForward> {
        let dt = t - g.t_center;
        let sv = g.scale_coeffs.eval(dt);
        let scale_raw = Vec3::new(sv[0], sv[1], sv[2]);
        let scale = scale_raw.max_scalar(SCALE_FLOOR);
        let qv = g.rot_coeffs.eval(dt);
        let q_raw = Quat::new(qv[0], qv[1], qv[2], qv[3]);
        let q_taylor = q_raw.normalize().map_err(|_| Error::DegenerateRotation {
            norm: q_raw.norm(),
        })?;

        let radii: Vec<f64> = row.indices.iter().map(|j| scene.controls.radii[*j]).collect();
        let w_raw: Vec<f64> = row
            .distances
            .iter()
            .zip(&radii)
            .map(|(d, r)| (-d * d / (2.0 * r * r)).exp())
            .collect();
        let max = w_raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights_uniform_fallback = !(max >= 1e-30);
        let weights = lbs_weights(&row.distances, &radii);
        let w_raw_sum: f64 = w_raw.iter().sum();

        let mut moved = Vec::with_capacity(row.indices.len());
        let mut blend_raw = Quat::new(0.0, 0.0, 0.0, 0.0);
        for (j, &gp) in row.indices.iter().enumerate() {
            let p = scene.controls.positions[gp];
            let m = deform.rot_mats[gp].mul_vec(g.mu - p) + p + deform.deltas[gp];
            moved.push(m);
            blend_raw = blend_raw.add(deform.unit_quats[gp].scale(weights[j]));
        }
        let blend = blend_raw.normalize().map_err(|_| Error::DegenerateRotation {
            norm: blend_raw.norm(),
        })?;
        let u = quat_mul(blend, q_taylor);
        let q_final = u.normalize()?;
        let r_final = quat_to_rotmat(q_final)?;
        let cov_w = crate::math::build_covariance(q_final, scale)?;
        Ok(TransformForward {
            scale_raw,
            scale,
            q_raw,
            q_taylor,
            blend_raw,
            blend,
            u,
            q_final,
            r_final,
            cov_w,
            weights,
            w_raw,
            w_raw_sum,
            weights_uniform_fallback,
            moved,
        })
    }
}

fn mat2_mul(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

fn mat2_scale(a: &[[f64; 2]; 2], s: f64) -> [[f64; 2]; 2] {
    [[a[0][0] * s, a[0][1] * s], [a[1][0] * s, a[1][1] * s]]
}

/// Gradient of the rotation-matrix entries with respect to the (unit)
/// quaternion components.
pub(crate) fn rotmat_grad_to_quat(q: Quat, d_r: &Mat3) -> [f64; 4] {
    let (w, x, y, z) = (q.w, q.x, q.y, q.z);
    let m = &d_r.m;
    let dw = 2.0
        * (m[0][1] * -z + m[0][2] * y + m[1][0] * z + m[1][2] * -x + m[2][0] * -y + m[2][1] * x);
    let dx = 2.0
        * (m[0][1] * y + m[0][2] * z + m[1][0] * y + m[1][1] * (-2.0 * x) + m[1][2] * -w
            + m[2][0] * z
            + m[2][1] * w
            + m[2][2] * (-2.0 * x));
    let dy = 2.0
        * (m[0][0] * (-2.0 * y) + m[0][1] * x + m[0][2] * w + m[1][0] * x + m[1][2] * z
            + m[2][0] * -w
            + m[2][1] * z
            + m[2][2] * (-2.0 * y));
    let dz = 2.0
        * (m[0][0] * (-2.0 * z) + m[0][1] * -w + m[0][2] * x + m[1][0] * w
            + m[1][1] * (-2.0 * z)
            + m[1][2] * y
            + m[2][0] * x
            + m[2][1] * y);
    [dw, dx, dy, dz]
}

/// Backward through `unit = raw / ||raw||`.
pub(crate) fn normalize_backward(raw: Quat, unit: Quat, d_unit: [f64; 4]) -> [f64; 4] {
    let n = raw.norm();
    let dot =
        d_unit[0] * unit.w + d_unit[1] * unit.x + d_unit[2] * unit.y + d_unit[3] * unit.z;
    [
        (d_unit[0] - unit.w * dot) / n,
        (d_unit[1] - unit.x * dot) / n,
        (d_unit[2] - unit.y * dot) / n,
        (d_unit[3] - unit.z * dot) / n,
    ]
}

/// Backward through the Hamilton product `r = a ⊗ b`.
pub(crate) fn quat_mul_backward(a: Quat, b: Quat, d_r: [f64; 4]) -> ([f64; 4], [f64; 4]) {
    let d_a = [
        d_r[0] * b.w + d_r[1] * b.x + d_r[2] * b.y + d_r[3] * b.z,
        -d_r[0] * b.x + d_r[1] * b.w - d_r[2] * b.z + d_r[3] * b.y,
        -d_r[0] * b.y + d_r[1] * b.z + d_r[2] * b.w - d_r[3] * b.x,
        -d_r[0] * b.z - d_r[1] * b.y + d_r[2] * b.x + d_r[3] * b.w,
    ];
    let d_b = [
        d_r[0] * a.w + d_r[1] * a.x + d_r[2] * a.y + d_r[3] * a.z,
        -d_r[0] * a.x + d_r[1] * a.w + d_r[2] * a.z - d_r[3] * a.y,
        -d_r[0] * a.y - d_r[1] * a.z + d_r[2] * a.w + d_r[3] * a.x,
        -d_r[0] * a.z + d_r[1] * a.y - d_r[2] * a.x + d_r[3] * a.w,
    ];
    (d_a, d_b)
}

fn non_finite_diagnostics(scene: &Scene, layout: &ParamLayout) -> Error {
    let params = layout.pack(scene);
    let mut bad_groups = std::collections::BTreeSet::new();
    for (i, v) in params.iter().enumerate() {
        if !v.is_finite() {
            bad_groups.insert(format!("{:?}", layout.group_of(i)));
        }
    }
    let detail = if bad_groups.is_empty() {
        "loss is non-finite but all parameters are finite (overflow in the forward pass)".to_string()
    } else {
        format!(
            "loss is non-finite; non-finite parameter groups: {}",
            bad_groups.into_iter().collect::<Vec<_>>().join(", ")
        )
    };
    Error::NonFinite { context: detail }
}
