//! Shared builders for integration tests.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsplat_core::deform::ControlPointSet;
use tsplat_core::scene::{Camera, Gaussian4D, ModelOrders, Scene};
use tsplat_core::{Quat, Vec3};

/// A camera on -y looking at the origin, centered principal point.
pub fn test_camera(width: usize, height: usize, distance: f64, focal: f64) -> Camera {
    Camera::look_at(
        Vec3::new(0.0, -distance, 0.0),
        Vec3::ZERO,
        focal,
        focal,
        width,
        height,
    )
}

/// A fully randomized dynamic scene: every parameter group active, all
/// polynomial orders populated, control network head nonzero.
pub fn random_scene(n_gaussians: usize, n_controls: usize, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let orders = ModelOrders::default();
    let mut gaussians = Vec::with_capacity(n_gaussians);
    for _ in 0..n_gaussians {
        let mu = Vec3::new(
            rng.gen_range(-0.8..0.8),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.8..0.8),
        );
        let rot = Quat::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        )
        .normalize()
        .unwrap();
        let scale = Vec3::new(
            rng.gen_range(0.15..0.45),
            rng.gen_range(0.15..0.45),
            rng.gen_range(0.15..0.45),
        );
        let color = Vec3::new(
            rng.gen_range(0.1..0.9),
            rng.gen_range(0.1..0.9),
            rng.gen_range(0.1..0.9),
        );
        let mut g = Gaussian4D::staticy(mu, rot, scale, color, rng.gen_range(0.35..0.85), orders);
        g.mu_tau = rng.gen_range(0.2..0.8);
        g.s_tau = rng.gen_range(0.1..2.0);
        g.t_center = rng.gen_range(0.35..0.65);
        for k in 1..=orders.position {
            g.pos_coeffs.coeffs[k] = (0..3).map(|_| rng.gen_range(-0.3..0.3)).collect();
        }
        for k in 1..=orders.scale {
            g.scale_coeffs.coeffs[k] = (0..3).map(|_| rng.gen_range(-0.05..0.05)).collect();
        }
        for k in 1..=orders.rotation {
            g.rot_coeffs.coeffs[k] = (0..4).map(|_| rng.gen_range(-0.2..0.2)).collect();
        }
        gaussians.push(g);
    }
    let pts: Vec<Vec3> = gaussians.iter().map(|g| g.mu).collect();
    let mut controls = ControlPointSet::from_points(&pts, n_controls.min(n_gaussians), 0, seed ^ 0xabcd).unwrap();
    // Give the head nonzero weights so the correction field is active.
    for w in controls.net.layers[2].w.iter_mut() {
        *w = rng.gen_range(-0.05..0.05);
    }
    for b in controls.net.layers[2].b.iter_mut() {
        *b = rng.gen_range(-0.02..0.02);
    }
    for r in controls.radii.iter_mut() {
        *r = rng.gen_range(0.3..1.2);
    }
    Scene::new(
        gaussians,
        controls,
        Vec3::new(
            rng.gen_range(0.0..0.3),
            rng.gen_range(0.0..0.3),
            rng.gen_range(0.0..0.3),
        ),
        [0.0, 1.0],
        2,
        0,
    )
    .unwrap()
}

/// Reference frame: render of a perturbed clone, so residuals are nonzero
/// but structured.
pub fn target_for(scene: &Scene, cam: &Camera, t: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut other = scene.clone();
    for g in other.gaussians.iter_mut() {
        let shift = Vec3::new(
            rng.gen_range(-0.1..0.1),
            rng.gen_range(-0.1..0.1),
            rng.gen_range(-0.1..0.1),
        );
        g.pos_coeffs.coeffs[0] = (g.mu + shift).to_array().to_vec();
        g.sync_canonical();
        g.color = Vec3::new(
            (g.color.x + rng.gen_range(-0.2..0.2)).clamp(0.0, 1.0),
            (g.color.y + rng.gen_range(-0.2..0.2)).clamp(0.0, 1.0),
            (g.color.z + rng.gen_range(-0.2..0.2)).clamp(0.0, 1.0),
        );
    }
    tsplat_core::render::render_f64(&other, cam, t).unwrap()
}

/// Canonical static gaussian used by small tests.
pub fn plain_gaussian(mu: Vec3, scale: f64, color: Vec3, opacity: f64) -> Gaussian4D {
    Gaussian4D::staticy(
        mu,
        Quat::IDENTITY,
        Vec3::splat(scale),
        color,
        opacity,
        ModelOrders::default(),
    )
}
