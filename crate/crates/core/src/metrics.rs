//! Image quality metrics: PSNR and SSIM.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::img::ImageBuffer;

/// Cap reported instead of infinity when the MSE is zero.
pub const PSNR_CAP_DB: f64 = 100.0;

/// SSIM window edge.
pub const SSIM_WINDOW: usize = 11;
/// SSIM window Gaussian sigma.
pub const SSIM_SIGMA: f64 = 1.5;
pub(crate) const SSIM_C1: f64 = 0.01 * 0.01;
pub(crate) const SSIM_C2: f64 = 0.03 * 0.03;

/// Peak signal-to-noise ratio in dB over [0, 1] images, capped at
/// [`PSNR_CAP_DB`].
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    a.same_dims(b)?;
    Ok(psnr_f64(&a.to_f64(), &b.to_f64()))
}

pub fn psnr_f64(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mse: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
}

/// The normalized 1D Gaussian window used by SSIM.
pub fn ssim_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in w.iter_mut() {
        *v /= sum;
    }
    w
}

/// Mean local SSIM with an 11x11 Gaussian window (sigma 1.5), valid-mode
/// windows only, computed per channel and averaged. Errors when either side
/// is smaller than the window.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    a.same_dims(b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::ImageTooSmall(a.width, a.height, SSIM_WINDOW));
    }
    Ok(ssim_f64(&a.to_f64(), &b.to_f64(), a.width, a.height))
}

/// Extract one channel as a plane.
fn channel(data: &[f64], ch: usize) -> Vec<f64> {
    data.iter().skip(ch).step_by(3).copied().collect()
}

/// Separable valid-mode correlation with the SSIM window.
/// Output is (w - 10) x (h - 10).
fn window_filter(plane: &[f64], w: usize, h: usize) -> Vec<f64> {
    let win = ssim_window();
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    // Horizontal pass.
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, wk) in win.iter().enumerate() {
                acc += wk * plane[y * w + x + k];
            }
            tmp[y * ow + x] = acc;
        }
    }
    // Vertical pass.
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, wk) in win.iter().enumerate() {
                acc += wk * tmp[(y + k) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

pub(crate) struct SsimMaps {
    pub mu_a: Vec<f64>,
    pub mu_b: Vec<f64>,
    pub var_a: Vec<f64>,
    pub var_b: Vec<f64>,
    pub cov_ab: Vec<f64>,
    pub ow: usize,
    pub oh: usize,
}

pub(crate) fn ssim_maps(a: &[f64], b: &[f64], w: usize, h: usize) -> SsimMaps {
    let mu_a = window_filter(a, w, h);
    let mu_b = window_filter(b, w, h);
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let e_aa = window_filter(&aa, w, h);
    let e_bb = window_filter(&bb, w, h);
    let e_ab = window_filter(&ab, w, h);
    let var_a: Vec<f64> = e_aa.iter().zip(&mu_a).map(|(e, m)| e - m * m).collect();
    let var_b: Vec<f64> = e_bb.iter().zip(&mu_b).map(|(e, m)| e - m * m).collect();
    let cov_ab: Vec<f64> = e_ab
        .iter()
        .zip(mu_a.iter().zip(&mu_b))
        .map(|(e, (ma, mb))| e - ma * mb)
        .collect();
    SsimMaps {
        mu_a,
        mu_b,
        var_a,
        var_b,
        cov_ab,
        ow: w - SSIM_WINDOW + 1,
        oh: h - SSIM_WINDOW + 1,
    }
}

pub(crate) fn ssim_from_maps(m: &SsimMaps) -> f64 {
    let mut sum = 0.0;
    for i in 0..m.mu_a.len() {
        let a1 = 2.0 * m.mu_a[i] * m.mu_b[i] + SSIM_C1;
        let a2 = 2.0 * m.cov_ab[i] + SSIM_C2;
        let b1 = m.mu_a[i] * m.mu_a[i] + m.mu_b[i] * m.mu_b[i] + SSIM_C1;
        let b2 = m.var_a[i] + m.var_b[i] + SSIM_C2;
        sum += (a1 * a2) / (b1 * b2);
    }
    sum / m.mu_a.len() as f64
}

pub fn ssim_f64(a: &[f64], b: &[f64], w: usize, h: usize) -> f64 {
    let mut total = 0.0;
    for ch in 0..3 {
        let pa = channel(a, ch);
        let pb = channel(b, ch);
        let maps = ssim_maps(&pa, &pb, w, h);
        total += ssim_from_maps(&maps);
    }
    total / 3.0
}

/// Per-frame and mean metrics for a set of rendered/reference pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub frames: Vec<FrameMetrics>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
}

impl MetricReport {
    pub fn from_frames(frames: Vec<FrameMetrics>) -> MetricReport {
        let n = frames.len().max(1) as f64;
        let mean_psnr = frames.iter().map(|f| f.psnr).sum::<f64>() / n;
        let mean_ssim = frames.iter().map(|f| f.ssim).sum::<f64>() / n;
        MetricReport {
            frames,
            mean_psnr,
            mean_ssim,
        }
    }

    /// CSV with the LPIPS column left empty (not computed here).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("frame,psnr,ssim,lpips\n");
        for f in &self.frames {
            s.push_str(&format!("{},{:.6},{:.6},\n", f.name, f.psnr, f.ssim));
        }
        s.push_str(&format!("mean,{:.6},{:.6},\n", self.mean_psnr, self.mean_ssim));
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:<28} {:>9} {:>8}\n", "frame", "psnr(db)", "ssim");
        for f in &self.frames {
            s.push_str(&format!("{:<28} {:>9.3} {:>8.4}\n", f.name, f.psnr, f.ssim));
        }
        s.push_str(&format!(
            "{:<28} {:>9.3} {:>8.4}\n",
            "mean", self.mean_psnr, self.mean_ssim
        ));
        s
    }
}
