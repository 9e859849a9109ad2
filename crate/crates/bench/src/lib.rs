//! Shared scene builders for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsplat_core::deform::ControlPointSet;
use tsplat_core::scene::{Camera, Gaussian4D, ModelOrders, Scene};
use tsplat_core::{Quat, Vec3};

/// A dynamic scene with active motion coefficients and correction field.
pub fn bench_scene(n_gaussians: usize, n_controls: usize, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let orders = ModelOrders::default();
    let gaussians: Vec<Gaussian4D> = (0..n_gaussians)
        .map(|_| {
            let mu = Vec3::new(
                rng.gen_range(-0.9..0.9),
                rng.gen_range(-0.9..0.9),
                rng.gen_range(-0.9..0.9),
            );
            let mut g = Gaussian4D::staticy(
                mu,
                Quat::from_axis_angle(
                    Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 1.0),
                    rng.gen_range(-1.5..1.5),
                ),
                Vec3::new(
                    rng.gen_range(0.08..0.3),
                    rng.gen_range(0.08..0.3),
                    rng.gen_range(0.08..0.3),
                ),
                Vec3::new(rng.gen(), rng.gen(), rng.gen()),
                rng.gen_range(0.4..0.9),
                orders,
            );
            g.s_tau = rng.gen_range(0.0..3.0);
            for k in 1..=orders.position {
                g.pos_coeffs.coeffs[k] = (0..3).map(|_| rng.gen_range(-0.3..0.3)).collect();
            }
            g
        })
        .collect();
    let pts: Vec<Vec3> = gaussians.iter().map(|g| g.mu).collect();
    let mut controls = ControlPointSet::from_points(&pts, n_controls, 0, seed).unwrap();
    for w in controls.net.layers[2].w.iter_mut() {
        *w = rng.gen_range(-0.05..0.05);
    }
    Scene::new(gaussians, controls, Vec3::ZERO, [0.0, 1.0], 4.min(n_controls), 0).unwrap()
}

pub fn bench_camera(width: usize, height: usize) -> Camera {
    Camera::look_at(
        Vec3::new(0.0, -4.0, 1.5),
        Vec3::ZERO,
        width as f64 * 1.1,
        width as f64 * 1.1,
        width,
        height,
    )
}
