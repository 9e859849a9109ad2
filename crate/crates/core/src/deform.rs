//! The learned correction on top of the polynomial motion: sparse control
//! points sampled by farthest point sampling, a small time-conditioned
//! network predicting a rigid offset per control point, and Gaussian-kernel
//! blend-skinning weights that carry those offsets onto the dense
//! primitives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{quat_mul, quat_to_rotmat, Quat, Vec3};
use crate::scene::Gaussian4D;
use crate::taylor::{eval_taylor, TaylorEval};

/// Weights below this are considered vanished; the blend falls back to
/// uniform weights instead of dividing by ~0.
const WEIGHT_UNDERFLOW: f64 = 1e-30;

/// Blended quaternions that cancel below this norm are an error
/// (antipodal control rotations).
const BLEND_DEGENERATE_NORM: f64 = 1e-12;

/// Greedy farthest point sampling.
///
/// The first index is `seed_index`; each subsequent pick maximizes the
/// minimum distance to the already-selected set, breaking ties toward the
/// lowest index. Deterministic for a given seed.
pub fn farthest_point_sample(points: &[Vec3], n: usize, seed_index: usize) -> Result<Vec<usize>> {
    if n == 0 || n > points.len() {
        return Err(Error::SampleCountExceedsPoints {
            requested: n,
            available: points.len(),
        });
    }
    if seed_index >= points.len() {
        return Err(Error::Malformed {
            what: "fps seed".into(),
            detail: format!("seed index {} out of range {}", seed_index, points.len()),
        });
    }
    let mut selected = Vec::with_capacity(n);
    let mut min_dist = vec![f64::INFINITY; points.len()];
    let mut taken = vec![false; points.len()];

    let mut current = seed_index;
    selected.push(current);
    taken[current] = true;
    for _ in 1..n {
        let p = points[current];
        let mut best = usize::MAX;
        let mut best_dist = f64::NEG_INFINITY;
        for (i, q) in points.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let d = (*q - p).norm_squared();
            if d < min_dist[i] {
                min_dist[i] = d;
            }
            if min_dist[i] > best_dist {
                best_dist = min_dist[i];
                best = i;
            }
        }
        current = best;
        selected.push(current);
        taken[current] = true;
    }
    Ok(selected)
}

/// One primitive's nearest control points, canonical-space distances sorted
/// ascending.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NeighborRow {
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
}

/// Frozen canonical-space k-nearest-control-point table, one row per
/// primitive.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NeighborTable {
    pub rows: Vec<NeighborRow>,
}

/// Exact k-nearest-neighbor table by Euclidean distance, ties broken by the
/// lower control-point index.
pub fn build_neighbors(lps: &[Vec3], gps: &[Vec3], k: usize) -> Result<NeighborTable> {
    if gps.is_empty() {
        return Err(Error::EmptyControlPoints);
    }
    if k == 0 || k > gps.len() {
        return Err(Error::BadNeighborCount { k, n: gps.len() });
    }
    let rows = lps
        .iter()
        .map(|lp| {
            let mut cand: Vec<(f64, usize)> = gps
                .iter()
                .enumerate()
                .map(|(j, gp)| ((*lp - *gp).norm(), j))
                .collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cand.truncate(k);
            NeighborRow {
                indices: cand.iter().map(|c| c.1).collect(),
                distances: cand.iter().map(|c| c.0).collect(),
            }
        })
        .collect();
    Ok(NeighborTable { rows })
}

/// Normalized Gaussian-kernel skinning weights:
/// `w_j = exp(-d_j^2 / (2 r_j^2)) / sum`.
///
/// When every unnormalized weight underflows, falls back to uniform weights
/// (logged) instead of erroring.
pub fn lbs_weights(distances: &[f64], radii: &[f64]) -> Vec<f64> {
    debug_assert_eq!(distances.len(), radii.len());
    let raw: Vec<f64> = distances
        .iter()
        .zip(radii)
        .map(|(d, r)| (-d * d / (2.0 * r * r)).exp())
        .collect();
    let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max >= WEIGHT_UNDERFLOW) {
        log::warn!(
            "all skinning weights underflowed (max {max:.3e}); using uniform weights over {} neighbors",
            distances.len()
        );
        return vec![1.0 / distances.len() as f64; distances.len()];
    }
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / sum).collect()
}

/// A dense layer, weights row-major `rows x cols`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub rows: usize,
    pub cols: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl DenseLayer {
    fn zeros(rows: usize, cols: usize) -> Self {
        DenseLayer {
            rows,
            cols,
            w: vec![0.0; rows * cols],
            b: vec![0.0; rows],
        }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for r in 0..self.rows {
            let row = &self.w[r * self.cols..(r + 1) * self.cols];
            let mut acc = self.b[r];
            for (wv, xv) in row.iter().zip(x) {
                acc += wv * xv;
            }
            out.push(acc);
        }
    }
}

/// Per-control-point offset network.
///
/// Input is a sinusoidal time embedding concatenated with a learned
/// per-control-point embedding; two tanh hidden layers; a linear head
/// emitting a raw rotation 4-vector (about identity) and a translation.
/// The head is zero-initialized so the untrained field is exactly the
/// identity: the correction starts as a true residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformNet {
    pub freq_pairs: usize,
    pub embed_dim: usize,
    pub gp_count: usize,
    /// `gp_count * embed_dim`, learned.
    pub embeddings: Vec<f64>,
    pub layers: Vec<DenseLayer>,
}

/// Raw head outputs per control point: 4 rotation + 3 translation.
pub const NET_OUT_DIM: usize = 7;

pub const DEFAULT_FREQ_PAIRS: usize = 6;
pub const DEFAULT_EMBED_DIM: usize = 16;
pub const DEFAULT_HIDDEN: usize = 64;

impl DeformNet {
    pub fn input_dim(&self) -> usize {
        2 * self.freq_pairs + self.embed_dim
    }

    /// All parameters zero: identity rotation, zero translation everywhere.
    pub fn zeros(gp_count: usize) -> Self {
        let freq_pairs = DEFAULT_FREQ_PAIRS;
        let embed_dim = DEFAULT_EMBED_DIM;
        let hidden = DEFAULT_HIDDEN;
        let input = 2 * freq_pairs + embed_dim;
        DeformNet {
            freq_pairs,
            embed_dim,
            gp_count,
            embeddings: vec![0.0; gp_count * embed_dim],
            layers: vec![
                DenseLayer::zeros(hidden, input),
                DenseLayer::zeros(hidden, hidden),
                DenseLayer::zeros(NET_OUT_DIM, hidden),
            ],
        }
    }

    /// Random hidden layers and embeddings, zero head. The field still
    /// starts at the identity.
    pub fn seeded(gp_count: usize, seed: u64) -> Self {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut net = Self::zeros(gp_count);
        for e in net.embeddings.iter_mut() {
            *e = rng.gen_range(-0.1..0.1);
        }
        let n_layers = net.layers.len();
        for layer in net.layers.iter_mut().take(n_layers - 1) {
            let bound = (6.0 / (layer.rows + layer.cols) as f64).sqrt();
            for w in layer.w.iter_mut() {
                *w = rng.gen_range(-bound..bound);
            }
        }
        net
    }

    pub fn time_embedding(&self, t: f64) -> Vec<f64> {
        let mut e = Vec::with_capacity(2 * self.freq_pairs);
        for k in 0..self.freq_pairs {
            let f = std::f64::consts::PI * (1 << k) as f64;
            e.push((f * t).sin());
            e.push((f * t).cos());
        }
        e
    }

    fn input_for(&self, gp: usize, time_embed: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.input_dim());
        x.extend_from_slice(time_embed);
        x.extend_from_slice(&self.embeddings[gp * self.embed_dim..(gp + 1) * self.embed_dim]);
        x
    }

    /// Head output for one control point.
    pub fn forward(&self, gp: usize, t: f64) -> [f64; NET_OUT_DIM] {
        let te = self.time_embedding(t);
        self.forward_with_embed(gp, &te).0
    }

    /// Forward pass keeping the activations needed for backprop.
    pub fn forward_with_embed(&self, gp: usize, time_embed: &[f64]) -> ([f64; NET_OUT_DIM], NetCache) {
        let x = self.input_for(gp, time_embed);
        let mut h1 = Vec::new();
        self.layers[0].forward(&x, &mut h1);
        for v in h1.iter_mut() {
            *v = v.tanh();
        }
        let mut h2 = Vec::new();
        self.layers[1].forward(&h1, &mut h2);
        for v in h2.iter_mut() {
            *v = v.tanh();
        }
        let mut o = Vec::new();
        self.layers[2].forward(&h2, &mut o);
        let mut out = [0.0; NET_OUT_DIM];
        out.copy_from_slice(&o);
        (out, NetCache { x, h1, h2 })
    }

    /// Backprop one control point's head gradient into a flat gradient
    /// buffer laid out like [`Self::flatten`].
    pub fn backward(
        &self,
        gp: usize,
        cache: &NetCache,
        d_out: &[f64; NET_OUT_DIM],
        grad: &mut [f64],
    ) {
        debug_assert_eq!(grad.len(), self.param_count());
        let l0 = &self.layers[0];
        let l1 = &self.layers[1];
        let l2 = &self.layers[2];
        let (e_len, l0_len, l1_len) = (
            self.embeddings.len(),
            l0.w.len() + l0.b.len(),
            l1.w.len() + l1.b.len(),
        );
        let (g_embed, rest) = grad.split_at_mut(e_len);
        let (g_l0, rest) = rest.split_at_mut(l0_len);
        let (g_l1, g_l2) = rest.split_at_mut(l1_len);

        // Head (linear).
        let mut d_h2 = vec![0.0; l2.cols];
        for r in 0..l2.rows {
            let g = d_out[r];
            for c in 0..l2.cols {
                g_l2[r * l2.cols + c] += g * cache.h2[c];
                d_h2[c] += g * l2.w[r * l2.cols + c];
            }
            g_l2[l2.w.len() + r] += g;
        }
        // Second hidden layer (tanh).
        let mut d_h1 = vec![0.0; l1.cols];
        for r in 0..l1.rows {
            let g = d_h2[r] * (1.0 - cache.h2[r] * cache.h2[r]);
            for c in 0..l1.cols {
                g_l1[r * l1.cols + c] += g * cache.h1[c];
                d_h1[c] += g * l1.w[r * l1.cols + c];
            }
            g_l1[l1.w.len() + r] += g;
        }
        // First hidden layer (tanh); input gradient only matters for the
        // embedding slice, the time embedding is not a parameter.
        let time_dim = 2 * self.freq_pairs;
        for r in 0..l0.rows {
            let g = d_h1[r] * (1.0 - cache.h1[r] * cache.h1[r]);
            for c in 0..l0.cols {
                g_l0[r * l0.cols + c] += g * cache.x[c];
                if c >= time_dim {
                    g_embed[gp * self.embed_dim + (c - time_dim)] += g * l0.w[r * l0.cols + c];
                }
            }
            g_l0[l0.w.len() + r] += g;
        }
    }

    pub fn param_count(&self) -> usize {
        self.embeddings.len()
            + self
                .layers
                .iter()
                .map(|l| l.w.len() + l.b.len())
                .sum::<usize>()
    }

    /// Flat parameter order: embeddings, then each layer's weights + biases.
    pub fn flatten(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.embeddings);
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
    }

    pub fn unflatten(&mut self, data: &[f64]) -> Result<()> {
        if data.len() != self.param_count() {
            return Err(Error::ParamMismatch(format!(
                "net expects {} parameters, got {}",
                self.param_count(),
                data.len()
            )));
        }
        let mut off = 0;
        let e_len = self.embeddings.len();
        self.embeddings.copy_from_slice(&data[off..off + e_len]);
        off += e_len;
        for l in self.layers.iter_mut() {
            let (w_len, b_len) = (l.w.len(), l.b.len());
            l.w.copy_from_slice(&data[off..off + w_len]);
            off += w_len;
            l.b.copy_from_slice(&data[off..off + b_len]);
            off += b_len;
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.embeddings.iter().all(|v| *v == 0.0)
            && self
                .layers
                .iter()
                .all(|l| l.w.iter().all(|v| *v == 0.0) && l.b.iter().all(|v| *v == 0.0))
    }
}

/// Activations saved by the forward pass for one control point.
#[derive(Debug, Clone)]
pub struct NetCache {
    pub x: Vec<f64>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
}

/// Turn one head output into the rigid offset it encodes.
pub fn head_to_offset(out: &[f64; NET_OUT_DIM]) -> (Quat, Vec3) {
    let raw = Quat::new(1.0 + out[0], out[1], out[2], out[3]);
    let rot = raw.normalize().expect("rotation head offset from identity has nonzero norm");
    (rot, Vec3::new(out[4], out[5], out[6]))
}

/// Per-control-point rigid offsets at time `t`: unit rotation and
/// translation. Deterministic in the weights and `t`.
pub fn gp_offsets(net: &DeformNet, t: f64) -> Vec<(Quat, Vec3)> {
    let te = net.time_embedding(t);
    (0..net.gp_count)
        .map(|j| {
            let (out, _) = net.forward_with_embed(j, &te);
            head_to_offset(&out)
        })
        .collect()
}

/// Sparse control skeleton: canonical positions, learnable kernel radii and
/// the offset network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPointSet {
    pub positions: Vec<Vec3>,
    pub radii: Vec<f64>,
    pub net: DeformNet,
}

impl ControlPointSet {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Default control point count for a primitive count.
    pub fn default_count(lp_count: usize) -> usize {
        ((lp_count as f64 * 0.02).ceil() as usize).max(8).min(lp_count.max(1))
    }

    /// Sample control points from the primitive positions by farthest point
    /// sampling; radii start at the nearest-control spacing so kernels
    /// overlap.
    pub fn from_points(points: &[Vec3], n: usize, fps_seed: usize, net_seed: u64) -> Result<Self> {
        let idx = farthest_point_sample(points, n, fps_seed)?;
        let positions: Vec<Vec3> = idx.iter().map(|i| points[*i]).collect();
        let radii = if positions.len() == 1 {
            vec![1.0]
        } else {
            positions
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    positions
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != i)
                        .map(|(_, q)| (*p - *q).norm())
                        .fold(f64::INFINITY, f64::min)
                        .max(1e-3)
                })
                .collect()
        };
        Ok(ControlPointSet {
            positions,
            radii,
            net: DeformNet::seeded(n, net_seed),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.positions.is_empty() {
            return Err(Error::EmptyControlPoints);
        }
        if self.positions.len() != self.radii.len() || self.net.gp_count != self.positions.len() {
            return Err(Error::Malformed {
                what: "control point set".into(),
                detail: format!(
                    "{} positions, {} radii, net for {}",
                    self.positions.len(),
                    self.radii.len(),
                    self.net.gp_count
                ),
            });
        }
        if self.radii.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::Malformed {
                what: "control point set".into(),
                detail: "radii must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Blend-skinned absolute position: `Σ_j w_j (R_j (mu - p_j) + p_j + d_j)`.
/// All slices are aligned per neighbor; weights must be normalized.
pub fn warp_position(
    mu: Vec3,
    weights: &[f64],
    gp_positions: &[Vec3],
    offsets: &[(Quat, Vec3)],
) -> Vec3 {
    let mut out = Vec3::ZERO;
    for ((w, p), (rot, delta)) in weights.iter().zip(gp_positions).zip(offsets) {
        let r = quat_to_rotmat(*rot).expect("offset rotation is unit");
        let moved = r.mul_vec(mu - *p) + *p + *delta;
        out += moved * *w;
    }
    out
}

/// Blend-skinned rotation: `normalize(Σ_j w_j r_j) ⊗ q`, renormalized.
/// Errors when the blended quaternion cancels to ~zero norm.
pub fn warp_rotation(q: Quat, weights: &[f64], offsets: &[(Quat, Vec3)]) -> Result<Quat> {
    let blend = blend_rotations(weights, offsets)?;
    quat_mul(blend, q).normalize()
}

/// Weighted quaternion blend, normalized.
pub fn blend_rotations(weights: &[f64], offsets: &[(Quat, Vec3)]) -> Result<Quat> {
    let mut blend = Quat::new(0.0, 0.0, 0.0, 0.0);
    for (w, (r, _)) in weights.iter().zip(offsets) {
        blend = blend.add(r.scale(*w));
    }
    let n = blend.norm();
    if !(n > BLEND_DEGENERATE_NORM) {
        return Err(Error::DegenerateRotation { norm: n });
    }
    Ok(blend.scale(1.0 / n))
}

/// The learned correction for one primitive at time `t`: the position
/// residual relative to the canonical position, and the blended control
/// rotation (to be composed onto the polynomial rotation downstream).
///
/// With an all-zero network both parts are the identity.
pub fn eval_remainder(
    g: &Gaussian4D,
    t: f64,
    controls: &ControlPointSet,
    row: &NeighborRow,
) -> Result<(Vec3, Quat)> {
    let offsets = gp_offsets(&controls.net, t);
    eval_remainder_with(g, row, controls, &offsets)
}

/// Same as [`eval_remainder`] with the per-control offsets precomputed for
/// the whole scene at this `t`.
pub fn eval_remainder_with(
    g: &Gaussian4D,
    row: &NeighborRow,
    controls: &ControlPointSet,
    offsets: &[(Quat, Vec3)],
) -> Result<(Vec3, Quat)> {
    let radii: Vec<f64> = row.indices.iter().map(|j| controls.radii[*j]).collect();
    let weights = lbs_weights(&row.distances, &radii);
    let gp_pos: Vec<Vec3> = row.indices.iter().map(|j| controls.positions[*j]).collect();
    let local: Vec<(Quat, Vec3)> = row.indices.iter().map(|j| offsets[*j]).collect();
    let warped = warp_position(g.mu, &weights, &gp_pos, &local);
    let blend = blend_rotations(&weights, &local)?;
    Ok((warped - g.mu, blend))
}

/// Full transformation: polynomial motion plus the learned correction.
/// Position is additive; rotation composes the blended control rotation
/// onto the polynomial rotation; scale and temporal opacity come from the
/// polynomial term alone.
pub fn eval_full_transform(
    g: &Gaussian4D,
    t: f64,
    controls: &ControlPointSet,
    row: &NeighborRow,
) -> Result<TaylorEval> {
    let offsets = gp_offsets(&controls.net, t);
    eval_full_transform_with(g, t, controls, row, &offsets)
}

/// [`eval_full_transform`] with precomputed per-control offsets.
pub fn eval_full_transform_with(
    g: &Gaussian4D,
    t: f64,
    controls: &ControlPointSet,
    row: &NeighborRow,
    offsets: &[(Quat, Vec3)],
) -> Result<TaylorEval> {
    let base = eval_taylor(g, t)?;
    let (h_pos, blend) = eval_remainder_with(g, row, controls, offsets)?;
    Ok(TaylorEval {
        position: base.position + h_pos,
        scale: base.scale,
        rotation: quat_mul(blend, base.rotation).normalize()?,
        temporal_opacity: base.temporal_opacity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn chacha(seed: u64) -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn fps_full_permutation() {
        let pts: Vec<Vec3> = (0..7).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        let mut idx = farthest_point_sample(&pts, 7, 0).unwrap();
        idx.sort_unstable();
        assert_eq!(idx, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn fps_collinear_picks_endpoints() {
        let pts: Vec<Vec3> = (0..10).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        let idx = farthest_point_sample(&pts, 2, 0).unwrap();
        assert_eq!(idx, vec![0, 9]);
    }

    #[test]
    fn fps_identical_points_tie_break() {
        let pts = vec![Vec3::splat(2.0); 5];
        let idx = farthest_point_sample(&pts, 3, 0).unwrap();
        assert_eq!(idx, vec![0, 1, 2]);
    }

    #[test]
    fn fps_brute_force_oracle() {
        // Greedy reference: recompute min-distances from scratch each pick.
        let mut rng = chacha(17);
        let pts: Vec<Vec3> = (0..40)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let got = farthest_point_sample(&pts, 12, 3).unwrap();
        let mut expect = vec![3usize];
        while expect.len() < 12 {
            let mut best = usize::MAX;
            let mut best_d = f64::NEG_INFINITY;
            for i in 0..pts.len() {
                if expect.contains(&i) {
                    continue;
                }
                let d = expect
                    .iter()
                    .map(|s| (pts[i] - pts[*s]).norm_squared())
                    .fold(f64::INFINITY, f64::min);
                if d > best_d {
                    best_d = d;
                    best = i;
                }
            }
            expect.push(best);
        }
        assert_eq!(got, expect);
    }

    #[test]
    fn fps_rejects_oversample() {
        let pts = vec![Vec3::ZERO; 3];
        assert!(farthest_point_sample(&pts, 4, 0).is_err());
    }

    #[test]
    fn fps_invariant_under_rigid_transform() {
        let mut rng = chacha(23);
        let pts: Vec<Vec3> = (0..30)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let rot = quat_to_rotmat(Quat::from_axis_angle(Vec3::new(0.3, 1.0, -0.5), 1.1)).unwrap();
        let shift = Vec3::new(5.0, -2.0, 0.7);
        let moved: Vec<Vec3> = pts.iter().map(|p| rot.mul_vec(*p) + shift).collect();
        let a = farthest_point_sample(&pts, 10, 2).unwrap();
        let b = farthest_point_sample(&moved, 10, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn knn_single_gp() {
        let lps = vec![Vec3::ZERO, Vec3::new(1.0, 1.0, 0.0)];
        let gps = vec![Vec3::new(0.0, 3.0, 0.0)];
        let t = build_neighbors(&lps, &gps, 1).unwrap();
        assert_eq!(t.rows[0].indices, vec![0]);
        assert_abs_diff_eq!(t.rows[0].distances[0], 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t.rows[1].distances[0], (1.0f64 + 4.0).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn knn_tie_prefers_lower_index() {
        let lps = vec![Vec3::ZERO];
        let gps = vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0)];
        let t = build_neighbors(&lps, &gps, 2).unwrap();
        assert_eq!(t.rows[0].indices, vec![0, 1]);
    }

    #[test]
    fn knn_matches_exhaustive_sort() {
        let mut rng = chacha(31);
        let lps: Vec<Vec3> = (0..50)
            .map(|_| Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
            .collect();
        let gps: Vec<Vec3> = (0..8)
            .map(|_| Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
            .collect();
        let t = build_neighbors(&lps, &gps, 4).unwrap();
        for (i, lp) in lps.iter().enumerate() {
            let mut all: Vec<(f64, usize)> =
                gps.iter().enumerate().map(|(j, g)| ((*lp - *g).norm(), j)).collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let expect: Vec<usize> = all[..4].iter().map(|c| c.1).collect();
            assert_eq!(t.rows[i].indices, expect, "row {i}");
            for w in t.rows[i].distances.windows(2) {
                assert!(w[0] <= w[1]);
            }
        }
    }

    #[test]
    fn knn_empty_controls_error() {
        assert!(build_neighbors(&[Vec3::ZERO], &[], 1).is_err());
        let gps = vec![Vec3::ZERO, Vec3::splat(1.0)];
        assert!(build_neighbors(&[Vec3::ZERO], &gps, 3).is_err());
        assert!(build_neighbors(&[Vec3::ZERO], &gps, 0).is_err());
    }

    #[test]
    fn weights_single_and_symmetric() {
        assert_eq!(lbs_weights(&[0.7], &[0.4]), vec![1.0]);
        let w = lbs_weights(&[1.3, 1.3], &[0.5, 0.5]);
        assert_abs_diff_eq!(w[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(w[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn weights_match_direct_evaluation() {
        let w = lbs_weights(&[1.0, 2.0], &[1.0, 1.0]);
        assert_abs_diff_eq!(w[0], 0.81757, epsilon = 1e-5);
        assert_abs_diff_eq!(w[1], 0.18243, epsilon = 1e-5);
        let raw = [(-0.5f64).exp(), (-2.0f64).exp()];
        let sum = raw[0] + raw[1];
        assert_abs_diff_eq!(w[0], raw[0] / sum, epsilon = 1e-15);
    }

    #[test]
    fn weights_underflow_falls_back_to_uniform() {
        let w = lbs_weights(&[1e6, 1e6, 1e6], &[1e-3, 1e-3, 1e-3]);
        for v in &w {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn weights_normalized_over_random_draws() {
        let mut rng = chacha(41);
        for _ in 0..1000 {
            let n = rng.gen_range(1..6);
            let d: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..5.0)).collect();
            let r: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..3.0)).collect();
            let w = lbs_weights(&d, &r);
            let sum: f64 = w.iter().sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-9);
            assert!(w.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn zero_net_outputs_identity_everywhere() {
        let net = DeformNet::zeros(4);
        for t in [0.0, 0.31, 0.77, 1.0] {
            for (rot, delta) in gp_offsets(&net, t) {
                assert_eq!(rot, Quat::IDENTITY);
                assert_eq!(delta, Vec3::ZERO);
            }
        }
        // Zero head keeps the identity even with random hidden layers.
        let net = DeformNet::seeded(4, 99);
        for (rot, delta) in gp_offsets(&net, 0.42) {
            assert_eq!(rot, Quat::IDENTITY);
            assert_eq!(delta, Vec3::ZERO);
        }
    }

    #[test]
    fn net_outputs_are_deterministic() {
        let mut net = DeformNet::seeded(3, 7);
        // Give the head nonzero weights so outputs are nontrivial.
        let mut rng = chacha(8);
        for w in net.layers[2].w.iter_mut() {
            *w = rng.gen_range(-0.2..0.2);
        }
        let a = gp_offsets(&net, 0.3);
        let b = gp_offsets(&net, 0.3);
        assert_eq!(a, b);
    }

    #[test]
    fn net_outputs_vary_smoothly() {
        let mut net = DeformNet::seeded(2, 7);
        let mut rng = chacha(8);
        for w in net.layers[2].w.iter_mut() {
            *w = rng.gen_range(-0.2..0.2);
        }
        // Empirical Lipschitz bound from coarse sampling, then verify fine
        // steps stay under it.
        let mut max_rate: f64 = 0.0;
        for i in 0..100 {
            let t = i as f64 / 100.0;
            let a = gp_offsets(&net, t);
            let b = gp_offsets(&net, t + 0.01);
            let d = offset_distance(&a, &b) / 0.01;
            max_rate = max_rate.max(d);
        }
        let lipschitz = max_rate * 4.0 + 1.0;
        for i in 0..200 {
            let t = i as f64 / 200.0 * 0.999;
            let a = gp_offsets(&net, t);
            let b = gp_offsets(&net, t + 1e-4);
            assert!(offset_distance(&a, &b) <= lipschitz * 1e-4);
        }
    }

    fn offset_distance(a: &[(Quat, Vec3)], b: &[(Quat, Vec3)]) -> f64 {
        a.iter()
            .zip(b)
            .map(|((qa, da), (qb, db))| {
                let dq = qa.add(qb.scale(-1.0)).norm();
                let dd = (*da - *db).norm();
                (dq * dq + dd * dd).sqrt()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn net_flatten_roundtrip() {
        let net = DeformNet::seeded(3, 21);
        let mut flat = Vec::new();
        net.flatten(&mut flat);
        assert_eq!(flat.len(), net.param_count());
        let mut other = DeformNet::zeros(3);
        other.unflatten(&flat).unwrap();
        assert_eq!(net, other);
    }

    #[test]
    fn warp_identity_translation_rotation() {
        let mu = Vec3::new(1.0, 0.0, 0.0);
        let gp = [Vec3::ZERO];
        // Identity offset leaves the point alone.
        let out = warp_position(mu, &[1.0], &gp, &[(Quat::IDENTITY, Vec3::ZERO)]);
        assert_eq!(out, mu);
        // Pure translation.
        let out = warp_position(mu, &[1.0], &gp, &[(Quat::IDENTITY, Vec3::new(1.0, 0.0, 0.0))]);
        assert_eq!(out, Vec3::new(2.0, 0.0, 0.0));
        // Quarter turn about z through the control point at the origin.
        let r = Quat::from_axis_angle(Vec3::new(0.0, 0.0, 1.0), std::f64::consts::FRAC_PI_2);
        let out = warp_position(mu, &[1.0], &gp, &[(r, Vec3::ZERO)]);
        assert_abs_diff_eq!(out.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.y, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn warp_rotation_cases() {
        let q = Quat::from_axis_angle(Vec3::new(1.0, 0.0, 0.0), 0.4);
        let id = (Quat::IDENTITY, Vec3::ZERO);
        let out = warp_rotation(q, &[1.0], &[id]).unwrap();
        assert_abs_diff_eq!(out.dot(q).abs(), 1.0, epsilon = 1e-12);

        // Two equal-weight identical rotations behave like one.
        let r90 = Quat::from_axis_angle(Vec3::new(0.0, 0.0, 1.0), std::f64::consts::FRAC_PI_2);
        let one = warp_rotation(q, &[1.0], &[(r90, Vec3::ZERO)]).unwrap();
        let two = warp_rotation(q, &[0.5, 0.5], &[(r90, Vec3::ZERO), (r90, Vec3::ZERO)]).unwrap();
        assert_abs_diff_eq!(one.dot(two).abs(), 1.0, epsilon = 1e-12);

        // Composition against the Hamilton product oracle.
        let got = warp_rotation(Quat::IDENTITY, &[1.0], &[(r90, Vec3::ZERO)]).unwrap();
        assert_abs_diff_eq!(got.dot(r90).abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn warp_rotation_antipodal_cancellation_errors() {
        let r = Quat::from_axis_angle(Vec3::new(0.0, 0.0, 1.0), 0.8);
        let anti = r.scale(-1.0);
        let err = warp_rotation(Quat::IDENTITY, &[0.5, 0.5], &[(r, Vec3::ZERO), (anti, Vec3::ZERO)]);
        assert!(err.is_err());
    }
}
