//! The dominant transformation component: polynomial evaluation of
//! position, scale and rotation in `(t - t_center)`, plus the temporal
//! opacity kernel.

use crate::error::{Error, Result};
use crate::math::{Quat, Vec3};
use crate::scene::{Gaussian4D, TaylorCoeffs};

/// Scale components are clamped here; the scale polynomial can cross zero
/// but the covariance factorization needs strictly positive scales.
pub const SCALE_FLOOR: f64 = 1e-6;

/// Norm below which the rotation polynomial is considered degenerate.
pub const ROT_DEGENERATE_NORM: f64 = 1e-12;

/// Evaluated per-primitive state at one timestamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorEval {
    pub position: Vec3,
    /// Component-wise >= `SCALE_FLOOR`.
    pub scale: Vec3,
    /// Unit norm.
    pub rotation: Quat,
    /// In `[0, sigma_s]`.
    pub temporal_opacity: f64,
}

/// Position polynomial at time `t` about `t_center`.
pub fn eval_position(coeffs: &TaylorCoeffs, t: f64, t_center: f64) -> Vec3 {
    let v = coeffs.eval(t - t_center);
    Vec3::new(v[0], v[1], v[2])
}

/// Scale polynomial at time `t`, clamped component-wise to `SCALE_FLOOR`.
pub fn eval_scale(coeffs: &TaylorCoeffs, t: f64, t_center: f64) -> Vec3 {
    let v = coeffs.eval(t - t_center);
    Vec3::new(v[0], v[1], v[2]).max_scalar(SCALE_FLOOR)
}

/// Rotation polynomial at time `t`: raw 4-vector sum, then normalized.
///
/// Errors when the polynomial sum has norm below `ROT_DEGENERATE_NORM`.
pub fn eval_rotation(coeffs: &TaylorCoeffs, t: f64, t_center: f64) -> Result<Quat> {
    let v = coeffs.eval(t - t_center);
    let q = Quat::new(v[0], v[1], v[2], v[3]);
    let n = q.norm();
    if !(n > ROT_DEGENERATE_NORM) {
        return Err(Error::DegenerateRotation { norm: n });
    }
    Ok(q.scale(1.0 / n))
}

/// Temporal opacity kernel: `sigma_s * exp(-s_tau * |t - mu_tau|^2)`.
///
/// Peaks at `sigma_s` when `t == mu_tau`; constant when `s_tau == 0`.
pub fn eval_temporal_opacity(sigma_s: f64, s_tau: f64, mu_tau: f64, t: f64) -> f64 {
    let dt = t - mu_tau;
    sigma_s * (-s_tau * dt * dt).exp()
}

/// Bundle of the four per-attribute evaluations.
pub fn eval_taylor(g: &Gaussian4D, t: f64) -> Result<TaylorEval> {
    Ok(TaylorEval {
        position: eval_position(&g.pos_coeffs, t, g.t_center),
        scale: eval_scale(&g.scale_coeffs, t, g.t_center),
        rotation: eval_rotation(&g.rot_coeffs, t, g.t_center)?,
        temporal_opacity: eval_temporal_opacity(g.sigma_s, g.s_tau, g.mu_tau, t),
    })
}
