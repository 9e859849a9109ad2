//! Reference gradient by central finite differences over the full render
//! and loss path. Slow and simple; serves as the oracle for the analytic
//! backward pass.

use crate::error::Result;
use crate::optim::backward::Sample;
use crate::optim::loss::loss_f64;
use crate::optim::params::ParamLayout;
use crate::render::render_f64;
use crate::scene::Scene;

pub const FD_STEP: f64 = 1e-4;

/// Loss of the scene described by `params` on one sample. The scene is
/// used as scratch space and left holding `params`.
pub fn loss_at(
    scene: &mut Scene,
    layout: &ParamLayout,
    params: &[f64],
    sample: &Sample,
    lambda_ssim: f64,
) -> Result<f64> {
    layout.unpack(params, scene)?;
    let rendered = render_f64(scene, sample.cam, sample.t)?;
    loss_f64(
        &rendered,
        sample.target,
        sample.cam.width,
        sample.cam.height,
        lambda_ssim,
    )
}

/// Central finite differences, one render pair per coordinate.
pub fn fd_gradient(
    scene: &mut Scene,
    layout: &ParamLayout,
    params: &[f64],
    sample: &Sample,
    lambda_ssim: f64,
    step: f64,
) -> Result<Vec<f64>> {
    let mut work = params.to_vec();
    let mut grad = vec![0.0; params.len()];
    for i in 0..params.len() {
        let orig = work[i];
        work[i] = orig + step;
        let plus = loss_at(scene, layout, &work, sample, lambda_ssim)?;
        work[i] = orig - step;
        let minus = loss_at(scene, layout, &work, sample, lambda_ssim)?;
        work[i] = orig;
        grad[i] = (plus - minus) / (2.0 * step);
    }
    layout.unpack(params, scene)?;
    Ok(grad)
}

/// Fraction of coordinates where `analytic` and `reference` agree within a
/// relative tolerance with an absolute floor.
pub fn agreement_fraction(analytic: &[f64], reference: &[f64], rel: f64, abs_floor: f64) -> f64 {
    debug_assert_eq!(analytic.len(), reference.len());
    if analytic.is_empty() {
        return 1.0;
    }
    let ok = analytic
        .iter()
        .zip(reference)
        .filter(|(a, r)| {
            let diff = (*a - *r).abs();
            diff <= abs_floor + rel * a.abs().max(r.abs())
        })
        .count();
    ok as f64 / analytic.len() as f64
}
