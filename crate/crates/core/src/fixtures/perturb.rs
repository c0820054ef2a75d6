use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::EgoPoint;
use crate::lane::Lane3D;

/// Minimum lateral shift of a spurious lane from the lane it was copied from.
pub const SPURIOUS_MIN_SHIFT_M: f64 = 3.0;
const SPURIOUS_EXTRA_SHIFT_M: f64 = 2.0;

/// How pseudo-predictions get their existence probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProbModel {
    Fixed { true_prob: f64, spurious_prob: f64 },
    Uniform { true_range: (f64, f64), spurious_range: (f64, f64) },
}

impl Default for ProbModel {
    fn default() -> Self {
        Self::Fixed { true_prob: 1.0, spurious_prob: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub sigma_x: f64,
    pub sigma_z: f64,
    /// Fraction of ground-truth lanes removed, rounded to a whole count.
    pub drop_rate: f64,
    /// Spurious lanes added, as a fraction of the ground-truth count.
    pub spurious_rate: f64,
    pub prob_model: ProbModel,
}

fn draw_prob(rng: &mut ChaCha8Rng, model: &ProbModel, spurious: bool) -> f64 {
    let pick = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| if hi > lo { rng.random_range(lo..hi) } else { lo };
    let p = match (*model, spurious) {
        (ProbModel::Fixed { true_prob, .. }, false) => true_prob,
        (ProbModel::Fixed { spurious_prob, .. }, true) => spurious_prob,
        (ProbModel::Uniform { true_range, .. }, false) => pick(rng, true_range),
        (ProbModel::Uniform { spurious_range, .. }, true) => pick(rng, spurious_range),
    };
    p.clamp(0.0, 1.0)
}

fn jitter(rng: &mut ChaCha8Rng, lane: &Lane3D, dx: f64, noise: &NoiseConfig, prob: f64) -> Lane3D {
    // zero or invalid sigmas leave the coordinate untouched
    let nx = Normal::new(0.0, noise.sigma_x).ok().filter(|_| noise.sigma_x > 0.0);
    let nz = Normal::new(0.0, noise.sigma_z).ok().filter(|_| noise.sigma_z > 0.0);
    let pts: Vec<EgoPoint> = lane
        .points()
        .iter()
        .map(|p| {
            let ex = nx.map_or(0.0, |d| d.sample(rng));
            let ez = nz.map_or(0.0, |d| d.sample(rng));
            EgoPoint::new(p.x + dx + ex, p.y, p.z + ez)
        })
        .collect();
    Lane3D::new(lane.category(), pts, lane.visibility().to_vec(), prob).expect("y values are preserved")
}

/// Pseudo-predictions derived from ground truth, deterministic in `seed`.
///
/// Surviving lanes come first in their original order, followed by spurious
/// copies of random ground-truth lanes shifted sideways by 3–5 m.
pub fn perturb_predictions(gt: &[Lane3D], seed: u64, noise: &NoiseConfig) -> Vec<Lane3D> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = gt.len();
    let n_drop = (libm::round(noise.drop_rate.clamp(0.0, 1.0) * n as f64) as usize).min(n);
    let mut dropped = alloc::vec![false; n];
    if n_drop > 0 {
        for i in rand::seq::index::sample(&mut rng, n, n_drop).iter() {
            dropped[i] = true;
        }
    }

    let mut out = Vec::with_capacity(n);
    for (lane, _) in gt.iter().zip(&dropped).filter(|(_, &d)| !d) {
        let prob = draw_prob(&mut rng, &noise.prob_model, false);
        out.push(jitter(&mut rng, lane, 0.0, noise, prob));
    }

    let n_spurious = if n == 0 { 0 } else { libm::round(noise.spurious_rate.max(0.0) * n as f64) as usize };
    for _ in 0..n_spurious {
        let src = &gt[rng.random_range(0..n)];
        let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let shift = side * (SPURIOUS_MIN_SHIFT_M + rng.random_range(0.0..SPURIOUS_EXTRA_SHIFT_M));
        let prob = draw_prob(&mut rng, &noise.prob_model, true);
        out.push(jitter(&mut rng, src, shift, noise, prob));
    }
    out
}
