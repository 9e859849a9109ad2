//! Scene containers: the dynamic Gaussian primitive, its per-attribute
//! polynomial coefficient banks, the pinhole camera and the scene itself.

use serde::{Deserialize, Serialize};

use crate::deform::{build_neighbors, ControlPointSet, NeighborTable};
use crate::error::{Error, Result};
use crate::math::{quat_to_rotmat, Mat3, Quat, Vec3};

/// Per-attribute polynomial coefficients.
///
/// Entry `k` stores the k-th derivative at the expansion center already
/// divided by `k!`, so evaluation is a plain polynomial in `(t - t_center)`.
/// Length is `order + 1`; each entry matches the attribute dimensionality
/// (3 for position and scale, 4 for rotation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorCoeffs {
    pub coeffs: Vec<Vec<f64>>,
}

impl TaylorCoeffs {
    pub fn zeros(order: usize, dim: usize) -> Self {
        TaylorCoeffs {
            coeffs: vec![vec![0.0; dim]; order + 1],
        }
    }

    pub fn constant3(v: Vec3, order: usize) -> Self {
        let mut c = Self::zeros(order, 3);
        c.coeffs[0] = v.to_array().to_vec();
        c
    }

    pub fn constant4(q: Quat, order: usize) -> Self {
        let mut c = Self::zeros(order, 4);
        c.coeffs[0] = q.to_array().to_vec();
        c
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.coeffs.first().map_or(0, |c| c.len())
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().flatten().all(|v| v.is_finite())
    }

    /// Horner evaluation of all components at offset `dt`.
    pub fn eval(&self, dt: f64) -> Vec<f64> {
        let dim = self.dim();
        let mut acc = self.coeffs.last().cloned().unwrap_or_default();
        for k in (0..self.coeffs.len() - 1).rev() {
            for d in 0..dim {
                acc[d] = acc[d] * dt + self.coeffs[k][d];
            }
        }
        acc
    }

    /// Derivative with respect to `dt`, evaluated at `dt`.
    pub fn eval_derivative(&self, dt: f64) -> Vec<f64> {
        let dim = self.dim();
        let n = self.coeffs.len();
        if n <= 1 {
            return vec![0.0; dim];
        }
        let mut acc: Vec<f64> = self.coeffs[n - 1].iter().map(|c| c * (n - 1) as f64).collect();
        for k in (1..n - 1).rev() {
            for d in 0..dim {
                acc[d] = acc[d] * dt + self.coeffs[k][d] * k as f64;
            }
        }
        acc
    }
}

/// One dynamic primitive: canonical geometry plus its temporal evolution.
///
/// The canonical state is the zeroth polynomial term: `pos_coeffs[0]`,
/// `scale_coeffs[0]` and `rot_coeffs[0]` hold `mu`, `scale` and `rot`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gaussian4D {
    /// Canonical position, duplicated from `pos_coeffs[0]`.
    pub mu: Vec3,
    /// Canonical orientation, duplicated from `rot_coeffs[0]`.
    pub rot: Quat,
    /// Canonical scale (all components > 0), duplicated from `scale_coeffs[0]`.
    pub scale: Vec3,
    /// Degree-0 RGB color in [0, 1].
    pub color: Vec3,
    /// Stationary opacity in [0, 1].
    pub sigma_s: f64,
    /// Temporal center of the opacity kernel, normalized time in [0, 1].
    pub mu_tau: f64,
    /// Temporal scaling of the opacity kernel, >= 0.
    pub s_tau: f64,
    /// Expansion center of the motion polynomials.
    pub t_center: f64,
    pub pos_coeffs: TaylorCoeffs,
    pub scale_coeffs: TaylorCoeffs,
    pub rot_coeffs: TaylorCoeffs,
}

impl Gaussian4D {
    /// A static primitive: zero motion, time-independent opacity.
    pub fn staticy(
        mu: Vec3,
        rot: Quat,
        scale: Vec3,
        color: Vec3,
        sigma_s: f64,
        orders: ModelOrders,
    ) -> Self {
        Gaussian4D {
            mu,
            rot,
            scale,
            color,
            sigma_s,
            mu_tau: 0.5,
            s_tau: 0.0,
            t_center: 0.5,
            pos_coeffs: TaylorCoeffs::constant3(mu, orders.position),
            scale_coeffs: TaylorCoeffs::constant3(scale, orders.scale),
            rot_coeffs: TaylorCoeffs::constant4(rot, orders.rotation),
        }
    }

    /// Keep the duplicated canonical fields in sync with the zeroth
    /// polynomial terms.
    pub fn sync_canonical(&mut self) {
        self.mu = Vec3::new(
            self.pos_coeffs.coeffs[0][0],
            self.pos_coeffs.coeffs[0][1],
            self.pos_coeffs.coeffs[0][2],
        );
        self.scale = Vec3::new(
            self.scale_coeffs.coeffs[0][0],
            self.scale_coeffs.coeffs[0][1],
            self.scale_coeffs.coeffs[0][2],
        );
        self.rot = Quat::new(
            self.rot_coeffs.coeffs[0][0],
            self.rot_coeffs.coeffs[0][1],
            self.rot_coeffs.coeffs[0][2],
            self.rot_coeffs.coeffs[0][3],
        );
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale.min_component() <= 0.0 {
            return Err(Error::NonPositiveScale(self.scale.x, self.scale.y, self.scale.z));
        }
        let ok = self.mu.is_finite()
            && self.rot.is_finite()
            && self.scale.is_finite()
            && self.color.is_finite()
            && self.sigma_s.is_finite()
            && (0.0..=1.0).contains(&self.sigma_s)
            && (0.0..=1.0).contains(&self.mu_tau)
            && self.s_tau >= 0.0
            && self.t_center.is_finite()
            && self.pos_coeffs.is_finite()
            && self.scale_coeffs.is_finite()
            && self.rot_coeffs.is_finite();
        if !ok {
            return Err(Error::NonFinite {
                context: "gaussian parameters".into(),
            });
        }
        Ok(())
    }
}

/// Default polynomial orders for position / scale / rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelOrders {
    pub position: usize,
    pub scale: usize,
    pub rotation: usize,
}

impl Default for ModelOrders {
    fn default() -> Self {
        // Cubic position dominates large motion; scale and rotation stay lower.
        ModelOrders {
            position: 3,
            scale: 2,
            rotation: 1,
        }
    }
}

/// Pinhole camera with a world-to-camera rigid pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// World-to-camera rotation.
    pub rot: Quat,
    /// World-to-camera translation.
    pub trans: Vec3,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::ZeroAreaCamera {
                width: self.width,
                height: self.height,
            });
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidCamera(format!(
                "focal lengths must be positive, got ({}, {})",
                self.fx, self.fy
            )));
        }
        if !(0.0 <= self.cx && self.cx < self.width as f64)
            || !(0.0 <= self.cy && self.cy < self.height as f64)
        {
            return Err(Error::InvalidCamera(format!(
                "principal point ({}, {}) outside image {}x{}",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        quat_to_rotmat(self.rot).expect("camera pose quaternion is unit")
    }

    pub fn world_to_camera(&self, p: Vec3) -> Vec3 {
        self.rotation_matrix().mul_vec(p) + self.trans
    }

    /// Camera placed at `eye` looking at `target`, world Z up, image y down.
    pub fn look_at(
        eye: Vec3,
        target: Vec3,
        fx: f64,
        fy: f64,
        width: usize,
        height: usize,
    ) -> Camera {
        let up = Vec3::new(0.0, 0.0, 1.0);
        let forward = (target - eye).normalized();
        let mut right = forward.cross(up);
        if right.norm() < 1e-9 {
            right = Vec3::new(1.0, 0.0, 0.0);
        }
        let right = right.normalized();
        let down = forward.cross(right);
        let r_cw = Mat3::from_rows(right, down, forward);
        let trans = -r_cw.mul_vec(eye);
        Camera {
            fx,
            fy,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
            rot: crate::math::rotmat_to_quat(&r_cw),
            trans,
        }
    }
}

/// Scene: renderable primitives, the sparse control skeleton, background
/// color and the normalized time range.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scene {
    pub gaussians: Vec<Gaussian4D>,
    pub controls: ControlPointSet,
    pub background: Vec3,
    /// Raw time range mapped to normalized [0, 1].
    pub time_range: [f64; 2],
    /// Neighbor count for the control-point table.
    pub knn_k: usize,
    /// Seed index used by farthest point sampling when the controls were built.
    pub fps_seed: usize,
    /// Derived: per-primitive nearest control points in canonical space.
    /// Rebuilt on load, never serialized.
    #[serde(skip)]
    pub neighbors: NeighborTable,
}

impl Scene {
    pub fn new(
        gaussians: Vec<Gaussian4D>,
        controls: ControlPointSet,
        background: Vec3,
        time_range: [f64; 2],
        knn_k: usize,
        fps_seed: usize,
    ) -> Result<Scene> {
        let mut scene = Scene {
            gaussians,
            controls,
            background,
            time_range,
            knn_k,
            fps_seed,
            neighbors: NeighborTable::default(),
        };
        scene.rebuild_neighbors()?;
        Ok(scene)
    }

    /// Rebuild the frozen canonical-space neighbor table.
    pub fn rebuild_neighbors(&mut self) -> Result<()> {
        let lps: Vec<Vec3> = self.gaussians.iter().map(|g| g.mu).collect();
        let k = self.knn_k.min(self.controls.len()).max(1);
        self.neighbors = build_neighbors(&lps, &self.controls.positions, k)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.time_range[0] < self.time_range[1]) {
            return Err(Error::Malformed {
                what: "scene".into(),
                detail: format!(
                    "time range [{}, {}] must be increasing",
                    self.time_range[0], self.time_range[1]
                ),
            });
        }
        for g in &self.gaussians {
            g.validate()?;
        }
        self.controls.validate()?;
        if !self.background.is_finite() {
            return Err(Error::NonFinite {
                context: "background".into(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horner_matches_direct_sum() {
        let c = TaylorCoeffs {
            coeffs: vec![
                vec![1.0, -2.0, 0.5],
                vec![0.3, 0.0, 1.0],
                vec![-0.7, 2.0, 0.25],
            ],
        };
        for i in 0..20 {
            let dt = -1.0 + 0.1 * i as f64;
            let h = c.eval(dt);
            for d in 0..3 {
                let direct: f64 = (0..3).map(|k| c.coeffs[k][d] * dt.powi(k as i32)).sum();
                assert!((h[d] - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn derivative_of_cubic() {
        // f(dt) = dt^3 on x.
        let mut c = TaylorCoeffs::zeros(3, 3);
        c.coeffs[3][0] = 1.0;
        let d = c.eval_derivative(0.4);
        assert!((d[0] - 3.0 * 0.4f64.powi(2)).abs() < 1e-12);
        assert_eq!(d[1], 0.0);
    }

    #[test]
    fn camera_projection_frame() {
        let cam = Camera::look_at(
            Vec3::new(0.0, -4.0, 0.0),
            Vec3::ZERO,
            100.0,
            100.0,
            64,
            64,
        );
        cam.validate().unwrap();
        // The target sits on the optical axis at distance 4.
        let c = cam.world_to_camera(Vec3::ZERO);
        assert!((c.x).abs() < 1e-12 && (c.y).abs() < 1e-12);
        assert!((c.z - 4.0).abs() < 1e-12);
        // World +x maps to image +x, world +z maps to image -y (y is down).
        let px = cam.world_to_camera(Vec3::new(1.0, 0.0, 0.0));
        assert!(px.x > 0.99);
        let pz = cam.world_to_camera(Vec3::new(0.0, 0.0, 1.0));
        assert!(pz.y < -0.99);
    }

    #[test]
    fn camera_rejects_zero_area() {
        let mut cam = Camera::look_at(Vec3::new(0.0, -4.0, 0.0), Vec3::ZERO, 10.0, 10.0, 64, 64);
        cam.width = 0;
        assert!(cam.validate().is_err());
    }
}
