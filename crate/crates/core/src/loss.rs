//! Anchor training loss, evaluated only (no gradients).
//!
//! Existence is scored with binary cross-entropy over every anchor. Offset and
//! height errors are L1 distances masked by the ground-truth visibility and
//! counted only on anchors where a ground-truth lane exists; the visibility
//! term is the L1 distance between visibility vectors on those same anchors.
//! All terms are plain sums with unit weights.

use serde::{Deserialize, Serialize};

use crate::anchor::AnchorTensor;
use crate::lane::LaneCategory;

/// Lower bound applied to the arguments of the cross-entropy logs.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LossError {
    #[error("prediction shape {pred:?} does not match ground truth {gt:?}")]
    ShapeMismatch { pred: (usize, usize), gt: (usize, usize) },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub existence_term: f64,
    pub offset_term: f64,
    pub height_term: f64,
    pub visibility_term: f64,
    pub total: f64,
}

pub fn loss(pred: &AnchorTensor, gt: &AnchorTensor) -> Result<LossBreakdown, LossError> {
    if pred.shape() != gt.shape() {
        return Err(LossError::ShapeMismatch { pred: pred.shape(), gt: gt.shape() });
    }
    let (n, k) = gt.shape();
    let mut out = LossBreakdown::default();
    for category in LaneCategory::ALL {
        let p = pred.set(category);
        let g = gt.set(category);
        for i in 0..n {
            let prob = p.prob[i];
            let target = g.prob[i];
            out.existence_term -= target * libm::log(prob.max(PROB_EPS)) + (1.0 - target) * libm::log((1.0 - prob).max(PROB_EPS));
            if target == 0.0 {
                continue;
            }
            let (mut dx, mut dz, mut dv) = (0.0, 0.0, 0.0);
            for j in i * k..(i + 1) * k {
                let v_gt = g.visibility[j];
                dx += libm::fabs(v_gt * (p.x_offsets[j] - g.x_offsets[j]));
                dz += libm::fabs(v_gt * (p.heights[j] - g.heights[j]));
                dv += libm::fabs(p.visibility[j] - v_gt);
            }
            out.offset_term += target * dx;
            out.height_term += target * dz;
            out.visibility_term += target * dv;
        }
    }
    out.total = out.existence_term + out.offset_term + out.height_term + out.visibility_term;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn one_active(n: usize, k: usize, anchor: usize) -> AnchorTensor {
        let mut t = AnchorTensor::zeros(n, k);
        let set = t.set_mut(LaneCategory::Laneline);
        set.prob[anchor] = 1.0;
        for j in 0..k {
            set.visibility[anchor * k + j] = 1.0;
            set.x_offsets[anchor * k + j] = 0.05 * j as f64;
            set.heights[anchor * k + j] = 0.02 * j as f64;
        }
        t
    }

    #[test]
    fn perfect_prediction_is_zero() {
        let gt = one_active(26, 11, 7);
        let l = loss(&gt, &gt).unwrap();
        assert_eq!(l, LossBreakdown::default());
    }

    #[test]
    fn uniform_offset_error() {
        let gt = one_active(26, 11, 7);
        let mut pred = gt.clone();
        for v in &mut pred.set_mut(LaneCategory::Laneline).x_offsets[77..88] {
            *v += 0.1;
        }
        let l = loss(&pred, &gt).unwrap();
        // 11 positions x 0.1
        let expected: f64 = (0..11).map(|j| ((0.05 * j as f64 + 0.1) - 0.05 * j as f64).abs()).sum();
        assert_abs_diff_eq!(l.offset_term, expected, epsilon = 1e-15);
        assert_abs_diff_eq!(l.offset_term, 1.1, epsilon = 1e-12);
        assert_abs_diff_eq!(l.total, 1.1, epsilon = 1e-12);
        assert_eq!(l.height_term, 0.0);
    }

    #[test]
    fn inactive_anchor_with_half_probability() {
        let gt = AnchorTensor::zeros(1, 11);
        let mut pred = gt.clone();
        pred.set_mut(LaneCategory::Centerline).prob[0] = 0.5;
        pred.set_mut(LaneCategory::Centerline).x_offsets[3] = 9.0;
        let l = loss(&pred, &gt).unwrap();
        assert_abs_diff_eq!(l.existence_term, core::f64::consts::LN_2, epsilon = 1e-15);
        assert_eq!(l.offset_term + l.height_term + l.visibility_term, 0.0);
    }

    #[test]
    fn saturated_wrong_prediction_is_bounded() {
        let gt = one_active(2, 11, 0);
        let mut pred = gt.clone();
        pred.set_mut(LaneCategory::Laneline).prob[0] = 0.0;
        let l = loss(&pred, &gt).unwrap();
        assert_abs_diff_eq!(l.existence_term, -libm::log(PROB_EPS), epsilon = 1e-12);
    }

    #[test]
    fn shape_mismatch() {
        assert!(matches!(
            loss(&AnchorTensor::zeros(2, 11), &AnchorTensor::zeros(3, 11)),
            Err(LossError::ShapeMismatch { .. })
        ));
    }
}
