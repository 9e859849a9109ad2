//! Training loss: `(1 - λ) L1 + λ (1 - SSIM)`, with its gradient with
//! respect to the rendered image.

use crate::error::{Error, Result};
use crate::img::ImageBuffer;
use crate::metrics::{ssim_from_maps, ssim_maps, ssim_window, SsimMaps, SSIM_C1, SSIM_C2, SSIM_WINDOW};

/// Photometric loss between two images. Zero iff identical (for λ < 1);
/// requires matching dimensions, and images at least the SSIM window when
/// λ > 0.
pub fn loss(rendered: &ImageBuffer, target: &ImageBuffer, lambda_ssim: f64) -> Result<f64> {
    rendered.same_dims(target)?;
    loss_f64(
        &rendered.to_f64(),
        &target.to_f64(),
        rendered.width,
        rendered.height,
        lambda_ssim,
    )
}

pub fn loss_f64(rendered: &[f64], target: &[f64], w: usize, h: usize, lambda_ssim: f64) -> Result<f64> {
    if rendered.len() != target.len() || rendered.len() != 3 * w * h {
        return Err(Error::DimensionMismatch(w, h, target.len() / 3 / h.max(1), h));
    }
    let n = rendered.len() as f64;
    let l1 = rendered
        .iter()
        .zip(target)
        .map(|(r, t)| (r - t).abs())
        .sum::<f64>()
        / n;
    if lambda_ssim == 0.0 {
        return Ok(l1);
    }
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::ImageTooSmall(w, h, SSIM_WINDOW));
    }
    let ssim = crate::metrics::ssim_f64(rendered, target, w, h);
    Ok((1.0 - lambda_ssim) * l1 + lambda_ssim * (1.0 - ssim))
}

/// Loss plus `dL/d(rendered pixel)`.
pub fn loss_and_grad_f64(
    rendered: &[f64],
    target: &[f64],
    w: usize,
    h: usize,
    lambda_ssim: f64,
) -> Result<(f64, Vec<f64>)> {
    if rendered.len() != target.len() || rendered.len() != 3 * w * h {
        return Err(Error::DimensionMismatch(w, h, target.len() / 3 / h.max(1), h));
    }
    let n = rendered.len() as f64;
    let mut l1 = 0.0;
    let mut grad = vec![0.0f64; rendered.len()];
    for (i, (r, t)) in rendered.iter().zip(target).enumerate() {
        let d = r - t;
        l1 += d.abs();
        grad[i] = (1.0 - lambda_ssim) * sign(d) / n;
    }
    l1 /= n;
    if lambda_ssim == 0.0 {
        return Ok((l1, grad));
    }
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::ImageTooSmall(w, h, SSIM_WINDOW));
    }

    let mut ssim_total = 0.0;
    for ch in 0..3 {
        let x: Vec<f64> = rendered.iter().skip(ch).step_by(3).copied().collect();
        let y: Vec<f64> = target.iter().skip(ch).step_by(3).copied().collect();
        let maps = ssim_maps(&x, &y, w, h);
        ssim_total += ssim_from_maps(&maps);
        // d(mean SSIM of this channel)/dx, then fold into the loss gradient:
        // dLoss/dx = -λ/3 * dSSIM/dx.
        let dx = ssim_grad_plane(&x, &y, &maps, w, h);
        for (i, d) in dx.iter().enumerate() {
            grad[3 * i + ch] += -(lambda_ssim / 3.0) * d;
        }
    }
    let ssim = ssim_total / 3.0;
    Ok(((1.0 - lambda_ssim) * l1 + lambda_ssim * (1.0 - ssim), grad))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Gradient of the mean windowed SSIM of one channel with respect to `x`.
///
/// With per-window `S = (A1 A2) / (B1 B2)`, the pixel gradient gathers the
/// window coefficient maps:
///   dS/dμx  = (2 μy A2 - 2 μx S B2) / (B1 B2)
///   dS/dσx² = -S / B2
///   dS/dσxy = 2 A1 / (B1 B2)
/// and redistributes them through the window weights.
fn ssim_grad_plane(x: &[f64], y: &[f64], maps: &SsimMaps, w: usize, h: usize) -> Vec<f64> {
    let n_win = (maps.ow * maps.oh) as f64;
    let mut c_mu = vec![0.0; maps.ow * maps.oh];
    let mut c_var = vec![0.0; maps.ow * maps.oh];
    let mut c_cov = vec![0.0; maps.ow * maps.oh];
    let mut c_var_mu = vec![0.0; maps.ow * maps.oh];
    let mut c_cov_mu = vec![0.0; maps.ow * maps.oh];
    for i in 0..c_mu.len() {
        let (mu_a, mu_b) = (maps.mu_a[i], maps.mu_b[i]);
        let a1 = 2.0 * mu_a * mu_b + SSIM_C1;
        let a2 = 2.0 * maps.cov_ab[i] + SSIM_C2;
        let b1 = mu_a * mu_a + mu_b * mu_b + SSIM_C1;
        let b2 = maps.var_a[i] + maps.var_b[i] + SSIM_C2;
        let inv_b = 1.0 / (b1 * b2);
        let s = a1 * a2 * inv_b;
        let d_mu = (2.0 * mu_b * a2 - 2.0 * mu_a * s * b2) * inv_b;
        let d_var = -s / b2;
        let d_cov = 2.0 * a1 * inv_b;
        c_mu[i] = d_mu / n_win;
        c_var[i] = d_var / n_win;
        c_cov[i] = d_cov / n_win;
        c_var_mu[i] = c_var[i] * mu_a;
        c_cov_mu[i] = c_cov[i] * mu_b;
    }
    // dS̄/dx_q = scat(c_mu) + 2 x_q scat(c_var) - 2 scat(c_var μx)
    //           + y_q scat(c_cov) - scat(c_cov μy)
    let s_mu = window_scatter(&c_mu, maps.ow, maps.oh, w, h);
    let s_var = window_scatter(&c_var, maps.ow, maps.oh, w, h);
    let s_var_mu = window_scatter(&c_var_mu, maps.ow, maps.oh, w, h);
    let s_cov = window_scatter(&c_cov, maps.ow, maps.oh, w, h);
    let s_cov_mu = window_scatter(&c_cov_mu, maps.ow, maps.oh, w, h);
    (0..w * h)
        .map(|q| {
            s_mu[q] + 2.0 * x[q] * s_var[q] - 2.0 * s_var_mu[q] + y[q] * s_cov[q] - s_cov_mu[q]
        })
        .collect()
}

/// Transposed window filter: spread a valid-grid coefficient map back onto
/// the full pixel grid through the separable window.
fn window_scatter(c: &[f64], ow: usize, oh: usize, w: usize, h: usize) -> Vec<f64> {
    let win = ssim_window();
    // Horizontal: (ow x oh) -> (w x oh)
    let mut tmp = vec![0.0; w * oh];
    for y in 0..oh {
        for qx in 0..w {
            let mut acc = 0.0;
            for (k, wk) in win.iter().enumerate() {
                if qx >= k && qx - k < ow {
                    acc += wk * c[y * ow + (qx - k)];
                }
            }
            tmp[y * w + qx] = acc;
        }
    }
    // Vertical: (w x oh) -> (w x h)
    let mut out = vec![0.0; w * h];
    for qy in 0..h {
        for qx in 0..w {
            let mut acc = 0.0;
            for (k, wk) in win.iter().enumerate() {
                if qy >= k && qy - k < oh {
                    acc += wk * tmp[(qy - k) * w + qx];
                }
            }
            out[qy * w + qx] = acc;
        }
    }
    out
}
