//! Precision/recall sweep over existence-probability thresholds, AP, maximum
//! F-score, and near/far per-axis errors of matched lanes.
//!
//! Evaluation is split into a per-frame [`tally_frame`] and an order-preserving
//! [`aggregate`], so callers may compute tallies in parallel and still get
//! bit-identical reports as long as they aggregate in frame order.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::lane::{Lane3D, LaneCategory};
use crate::matcher::{cost_matrix, densify, match_dense, DenseLane, MatchConfig, MatchError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("dataset has no frames")]
    EmptyDataset,
    #[error("threshold list is empty")]
    EmptyThresholds,
    #[error(transparent)]
    Config(#[from] MatchError),
}

/// Ground truth and predictions for one frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalFrame {
    pub gt: Vec<Lane3D>,
    pub pred: Vec<Lane3D>,
}

/// 0.05, 0.10, …, 0.95.
pub fn default_thresholds() -> Vec<f64> {
    (1..=19).map(|i| i as f64 / 20.0).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LaneCounts {
    pub gt: usize,
    pub pred: usize,
    pub matched_gt: usize,
    pub matched_pred: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct ErrorSums {
    x_near: f64,
    z_near: f64,
    n_near: usize,
    x_far: f64,
    z_far: f64,
    n_far: usize,
}

impl ErrorSums {
    fn add(&mut self, other: &ErrorSums) {
        self.x_near += other.x_near;
        self.z_near += other.z_near;
        self.n_near += other.n_near;
        self.x_far += other.x_far;
        self.z_far += other.z_far;
        self.n_far += other.n_far;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct ThresholdTally {
    counts: LaneCounts,
    errors: ErrorSums,
}

/// Per-threshold counts and error sums of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTally {
    per_threshold: Vec<ThresholdTally>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ap: f64,
    pub f_max: f64,
    /// Threshold at which `f_max` is first attained; errors and counts refer to it.
    pub best_threshold: f64,
    pub curve: Vec<CurvePoint>,
    pub x_err_near: f64,
    pub x_err_far: f64,
    pub z_err_near: f64,
    pub z_err_far: f64,
    pub counts: LaneCounts,
}

fn of_category(lanes: &[Lane3D], category: Option<LaneCategory>) -> Vec<&Lane3D> {
    lanes.iter().filter(|l| category.is_none_or(|c| l.category() == c)).collect()
}

fn tally_category(
    preds: &[&Lane3D],
    gts: &[&Lane3D],
    cfg: &MatchConfig,
    thresholds: &[f64],
    out: &mut [ThresholdTally],
) {
    let dp: Vec<DenseLane> = preds.iter().map(|l| densify(l, cfg)).collect();
    let dg: Vec<DenseLane> = gts.iter().map(|l| densify(l, cfg)).collect();
    let full = cost_matrix(&dp, &dg, cfg);
    let cols = dg.len();

    for (t, &tau) in thresholds.iter().enumerate() {
        let kept: Vec<usize> = (0..dp.len()).filter(|&i| dp[i].prob >= tau).collect();
        let kept_lanes: Vec<DenseLane> = kept.iter().map(|&i| dp[i].clone()).collect();
        let mut costs = Vec::with_capacity(kept.len() * cols);
        for &i in &kept {
            costs.extend_from_slice(&full[i * cols..(i + 1) * cols]);
        }
        let report = match_dense(&kept_lanes, &dg, &costs, cfg);

        let tally = &mut out[t];
        tally.counts.gt += dg.len();
        tally.counts.pred += kept.len();
        tally.counts.matched_pred += report.pred_matched.iter().filter(|&&m| m).count();
        tally.counts.matched_gt += report.gt_matched.iter().filter(|&&m| m).count();

        for a in &report.assignment {
            if !(report.pred_matched[a.pred] && report.gt_matched[a.gt]) {
                continue;
            }
            let (p, g) = (&kept_lanes[a.pred], &dg[a.gt]);
            for (i, &y) in cfg.dense_y_positions.iter().enumerate() {
                if !(p.covered[i] && g.covered[i]) || y > cfg.range_end {
                    continue;
                }
                let dx = libm::fabs(p.xs[i] - g.xs[i]);
                let dz = libm::fabs(p.zs[i] - g.zs[i]);
                let e = &mut tally.errors;
                if y < cfg.near_far_split {
                    e.x_near += dx;
                    e.z_near += dz;
                    e.n_near += 1;
                } else {
                    e.x_far += dx;
                    e.z_far += dz;
                    e.n_far += 1;
                }
            }
        }
    }
}

/// Matches one frame at every threshold. With `category = None` lanelines and
/// centerlines are matched separately and their counts pooled.
pub fn tally_frame(frame: &EvalFrame, cfg: &MatchConfig, thresholds: &[f64], category: Option<LaneCategory>) -> FrameTally {
    let mut per_threshold = vec![ThresholdTally::default(); thresholds.len()];
    let cats: &[LaneCategory] = match category {
        Some(ref c) => core::slice::from_ref(c),
        None => &LaneCategory::ALL,
    };
    for &c in cats {
        let preds = of_category(&frame.pred, Some(c));
        let gts = of_category(&frame.gt, Some(c));
        tally_category(&preds, &gts, cfg, thresholds, &mut per_threshold);
    }
    FrameTally { per_threshold }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 { 1.0 } else { num as f64 / den as f64 }
}

fn mean(sum: f64, n: usize) -> f64 {
    if n == 0 { 0.0 } else { sum / n as f64 }
}

fn f_score(p: f64, r: f64) -> f64 {
    if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) }
}

/// Area under the non-increasing precision envelope, integrated over recall from 0.
pub fn average_precision(curve: &[CurvePoint]) -> f64 {
    let mut pts: Vec<(f64, f64)> = curve.iter().map(|c| (c.recall, c.precision)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut env = vec![0.0; pts.len()];
    let mut best: f64 = 0.0;
    for i in (0..pts.len()).rev() {
        best = best.max(pts[i].1);
        env[i] = best;
    }
    let mut area = 0.0;
    let mut prev_r = 0.0;
    for (i, &(r, _)) in pts.iter().enumerate() {
        area += (r - prev_r) * env[i];
        prev_r = r;
    }
    area
}

/// Combines per-frame tallies (in the order given) into a report.
pub fn aggregate<I>(tallies: I, thresholds: &[f64]) -> Result<EvalReport, MetricsError>
where
    I: IntoIterator<Item = FrameTally>,
{
    if thresholds.is_empty() {
        return Err(MetricsError::EmptyThresholds);
    }
    let mut total = vec![ThresholdTally::default(); thresholds.len()];
    let mut frames = 0usize;
    for tally in tallies {
        frames += 1;
        for (acc, t) in total.iter_mut().zip(&tally.per_threshold) {
            acc.counts.gt += t.counts.gt;
            acc.counts.pred += t.counts.pred;
            acc.counts.matched_gt += t.counts.matched_gt;
            acc.counts.matched_pred += t.counts.matched_pred;
            acc.errors.add(&t.errors);
        }
    }
    if frames == 0 {
        return Err(MetricsError::EmptyDataset);
    }

    let curve: Vec<CurvePoint> = thresholds
        .iter()
        .zip(&total)
        .map(|(&threshold, t)| {
            let precision = ratio(t.counts.matched_pred, t.counts.pred);
            let recall = ratio(t.counts.matched_gt, t.counts.gt);
            CurvePoint { threshold, precision, recall, f_score: f_score(precision, recall) }
        })
        .collect();

    let mut best = 0;
    for (i, c) in curve.iter().enumerate() {
        if c.f_score > curve[best].f_score {
            best = i;
        }
    }
    let e = total[best].errors;
    Ok(EvalReport {
        ap: average_precision(&curve),
        f_max: curve[best].f_score,
        best_threshold: curve[best].threshold,
        x_err_near: mean(e.x_near, e.n_near),
        x_err_far: mean(e.x_far, e.n_far),
        z_err_near: mean(e.z_near, e.n_near),
        z_err_far: mean(e.z_far, e.n_far),
        counts: total[best].counts,
        curve,
    })
}

/// Precision and recall with predictions below `tau` discarded.
pub fn pr_at_threshold(frames: &[EvalFrame], tau: f64, cfg: &MatchConfig, category: Option<LaneCategory>) -> (f64, f64) {
    let mut counts = LaneCounts::default();
    for f in frames {
        let t = tally_frame(f, cfg, &[tau], category);
        let c = t.per_threshold[0].counts;
        counts.gt += c.gt;
        counts.pred += c.pred;
        counts.matched_gt += c.matched_gt;
        counts.matched_pred += c.matched_pred;
    }
    (ratio(counts.matched_pred, counts.pred), ratio(counts.matched_gt, counts.gt))
}

pub fn evaluate(
    frames: &[EvalFrame],
    cfg: &MatchConfig,
    thresholds: &[f64],
    category: Option<LaneCategory>,
) -> Result<EvalReport, MetricsError> {
    cfg.validate()?;
    if frames.is_empty() {
        return Err(MetricsError::EmptyDataset);
    }
    if thresholds.is_empty() {
        return Err(MetricsError::EmptyThresholds);
    }
    aggregate(frames.iter().map(|f| tally_frame(f, cfg, thresholds, category)), thresholds)
}
