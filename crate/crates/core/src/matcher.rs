//! Lane-to-lane matching for evaluation.
//!
//! Lanes are resampled at dense y-positions. The cost between two lanes is
//! `sqrt(Σ d_i)` where `d_i` is the squared point distance when both lanes
//! cover position `i`, zero when neither does, and an edit penalty when only
//! one does. Predicted and ground-truth sets are then assigned globally by
//! minimum-cost flow, and each assigned lane counts as matched when enough of
//! its own covered positions lie closer than `d_max` to its partner.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::flow::MinCostFlow;
use crate::lane::{Lane3D, Profile};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MatchError {
    #[error("dense lanes have {0} and {1} positions")]
    LengthMismatch(usize, usize),
    #[error("invalid match config: {0}")]
    InvalidConfig(&'static str),
}

/// What a position covered by only one lane of a pair contributes to `Σ d_i`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditPenalty {
    /// `d_max` itself.
    #[default]
    Linear,
    /// `d_max²`, in the same unit as the squared distances.
    Squared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub dense_y_positions: Vec<f64>,
    pub d_max: f64,
    pub match_fraction: f64,
    pub near_far_split: f64,
    pub range_end: f64,
    pub edit_penalty: EditPenalty,
}

pub const DEFAULT_D_MAX: f64 = 1.5;
pub const DEFAULT_MATCH_FRACTION: f64 = 0.75;
pub const DEFAULT_NEAR_FAR_SPLIT: f64 = 40.0;
pub const DEFAULT_RANGE_END: f64 = 100.0;
pub const DEFAULT_DENSE_STEP: f64 = 2.0;

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            dense_y_positions: dense_grid(0.0, DEFAULT_RANGE_END, DEFAULT_DENSE_STEP),
            d_max: DEFAULT_D_MAX,
            match_fraction: DEFAULT_MATCH_FRACTION,
            near_far_split: DEFAULT_NEAR_FAR_SPLIT,
            range_end: DEFAULT_RANGE_END,
            edit_penalty: EditPenalty::Linear,
        }
    }
}

/// `start, start+step, …` up to and including `end` (within rounding).
pub fn dense_grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || end < start {
        return Vec::new();
    }
    let n = libm::floor((end - start) / step + 1e-9) as usize + 1;
    (0..n).map(|i| start + step * i as f64).collect()
}

impl MatchConfig {
    pub fn validate(&self) -> Result<(), MatchError> {
        if self.dense_y_positions.is_empty() {
            return Err(MatchError::InvalidConfig("dense y-positions must not be empty"));
        }
        if !self.dense_y_positions.iter().all(|y| y.is_finite()) || !self.dense_y_positions.windows(2).all(|w| w[0] < w[1]) {
            return Err(MatchError::InvalidConfig("dense y-positions must be strictly increasing"));
        }
        if !(self.d_max > 0.0 && self.d_max.is_finite()) {
            return Err(MatchError::InvalidConfig("d_max must be positive"));
        }
        if !(self.match_fraction > 0.0 && self.match_fraction <= 1.0) {
            return Err(MatchError::InvalidConfig("match_fraction must lie in (0, 1]"));
        }
        if !(self.near_far_split.is_finite() && self.range_end.is_finite()) {
            return Err(MatchError::InvalidConfig("near/far split and range end must be finite"));
        }
        Ok(())
    }

    fn edit_cost(&self) -> f64 {
        match self.edit_penalty {
            EditPenalty::Linear => self.d_max,
            EditPenalty::Squared => self.d_max * self.d_max,
        }
    }
}

/// A lane resampled on the dense y-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLane {
    pub xs: Vec<f64>,
    pub zs: Vec<f64>,
    pub covered: Vec<bool>,
    pub prob: f64,
}

impl DenseLane {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn num_covered(&self) -> usize {
        self.covered.iter().filter(|&&c| c).count()
    }
}

/// Linear resampling of `(x, z)` against `y`; positions outside the visible
/// part of the lane are left uncovered with zero values.
pub fn densify(lane: &Lane3D, cfg: &MatchConfig) -> DenseLane {
    let prof = Profile::new(
        lane.points().iter().map(|p| p.y).collect(),
        lane.points().iter().map(|p| (p.x, p.z)).collect(),
        lane.visibility().to_vec(),
    );
    let n = cfg.dense_y_positions.len();
    let mut out = DenseLane { xs: vec![0.0; n], zs: vec![0.0; n], covered: vec![false; n], prob: lane.prob() };
    for (i, &y) in cfg.dense_y_positions.iter().enumerate() {
        if let Some(s) = prof.sample(y) {
            if s.covered {
                out.xs[i] = s.value.0;
                out.zs[i] = s.value.1;
                out.covered[i] = true;
            }
        }
    }
    out
}

/// Lane-to-lane cost and the per-position contributions `d_i`.
pub fn lane_cost(a: &DenseLane, b: &DenseLane, cfg: &MatchConfig) -> Result<(f64, Vec<f64>), MatchError> {
    if a.len() != b.len() {
        return Err(MatchError::LengthMismatch(a.len(), b.len()));
    }
    let edit = cfg.edit_cost();
    let pointwise: Vec<f64> = (0..a.len())
        .map(|i| match (a.covered[i], b.covered[i]) {
            (true, true) => {
                let dx = a.xs[i] - b.xs[i];
                let dz = a.zs[i] - b.zs[i];
                dx * dx + dz * dz
            }
            (false, false) => 0.0,
            _ => edit,
        })
        .collect();
    let cost = libm::sqrt(pointwise.iter().sum());
    Ok((cost, pointwise))
}

/// Minimum-cost assignment of cardinality `min(rows, cols)` for a row-major
/// `rows × cols` cost matrix, sorted by row. Costs must be finite and nonnegative.
pub fn min_cost_assign(costs: &[f64], rows: usize, cols: usize) -> Vec<(usize, usize)> {
    assert_eq!(costs.len(), rows * cols, "cost matrix has the wrong size");
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    let source = 0;
    let sink = rows + cols + 1;
    let mut g = MinCostFlow::new(rows + cols + 2);
    for r in 0..rows {
        g.add_edge(source, 1 + r, 1, 0.0);
    }
    let mut pair_edges = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            pair_edges.push(g.add_edge(1 + r, 1 + rows + c, 1, costs[r * cols + c]));
        }
    }
    for c in 0..cols {
        g.add_edge(1 + rows + c, sink, 1, 0.0);
    }
    g.run(source, sink, rows.min(cols) as i64);
    let mut out = Vec::with_capacity(rows.min(cols));
    for r in 0..rows {
        for c in 0..cols {
            if g.flow_on(pair_edges[r * cols + c]) > 0 {
                out.push((r, c));
            }
        }
    }
    out
}

/// Sum of assigned costs, accumulated in row order.
pub fn assignment_total(costs: &[f64], cols: usize, assignment: &[(usize, usize)]) -> f64 {
    assignment.iter().map(|&(r, c)| costs[r * cols + c]).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub pred: usize,
    pub gt: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub assignment: Vec<Assignment>,
    pub pred_matched: Vec<bool>,
    pub gt_matched: Vec<bool>,
    /// `d_i` contributions for each entry of `assignment`.
    pub pointwise: Vec<Vec<f64>>,
}

/// Pairwise costs between dense predictions (rows) and dense ground truth (cols).
pub fn cost_matrix(preds: &[DenseLane], gts: &[DenseLane], cfg: &MatchConfig) -> Vec<f64> {
    let mut costs = Vec::with_capacity(preds.len() * gts.len());
    for p in preds {
        for g in gts {
            costs.push(lane_cost(p, g, cfg).expect("dense lanes share the config grid").0);
        }
    }
    costs
}

/// Whether enough of `lane`'s covered positions are close to `other`.
fn passes_fraction(lane: &DenseLane, other: &DenseLane, pointwise: &[f64], cfg: &MatchConfig) -> bool {
    let covered = lane.num_covered();
    if covered == 0 {
        return false;
    }
    let close = (0..lane.len())
        .filter(|&i| lane.covered[i] && other.covered[i] && libm::sqrt(pointwise[i]) < cfg.d_max)
        .count();
    close as f64 >= cfg.match_fraction * covered as f64
}

/// Matches already-densified lanes given their precomputed cost matrix.
pub fn match_dense(preds: &[DenseLane], gts: &[DenseLane], costs: &[f64], cfg: &MatchConfig) -> MatchReport {
    let assignment = min_cost_assign(costs, preds.len(), gts.len());
    let mut report = MatchReport {
        assignment: Vec::with_capacity(assignment.len()),
        pred_matched: vec![false; preds.len()],
        gt_matched: vec![false; gts.len()],
        pointwise: Vec::with_capacity(assignment.len()),
    };
    for (p, g) in assignment {
        let (cost, pointwise) = lane_cost(&preds[p], &gts[g], cfg).expect("dense lanes share the config grid");
        report.pred_matched[p] = passes_fraction(&preds[p], &gts[g], &pointwise, cfg);
        report.gt_matched[g] = passes_fraction(&gts[g], &preds[p], &pointwise, cfg);
        report.assignment.push(Assignment { pred: p, gt: g, cost });
        report.pointwise.push(pointwise);
    }
    report
}

/// Matches one frame's predictions against its ground truth (one lane category).
pub fn match_frame(preds: &[Lane3D], gts: &[Lane3D], cfg: &MatchConfig) -> MatchReport {
    let dp: Vec<DenseLane> = preds.iter().map(|l| densify(l, cfg)).collect();
    let dg: Vec<DenseLane> = gts.iter().map(|l| densify(l, cfg)).collect();
    let costs = cost_matrix(&dp, &dg, cfg);
    match_dense(&dp, &dg, &costs, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::EgoPoint;
    use crate::lane::LaneCategory;
    use approx::assert_abs_diff_eq;

    fn straight(x: f64, y0: i32, y1: i32) -> Lane3D {
        let pts = (y0..=y1).map(|y| EgoPoint::new(x, y as f64, 0.0)).collect();
        Lane3D::fully_visible(LaneCategory::Laneline, pts).unwrap()
    }

    fn dense(xs: impl Fn(usize) -> f64, covered: impl Fn(usize) -> bool) -> DenseLane {
        let n = 51;
        DenseLane {
            xs: (0..n).map(&xs).collect(),
            zs: vec![0.0; n],
            covered: (0..n).map(&covered).collect(),
            prob: 1.0,
        }
    }

    #[test]
    fn default_grid_has_51_positions() {
        let cfg = MatchConfig::default();
        assert_eq!(cfg.dense_y_positions.len(), 51);
        assert_eq!(cfg.dense_y_positions[0], 0.0);
        assert_eq!(cfg.dense_y_positions[50], 100.0);
    }

    #[test]
    fn densify_full_lane() {
        let cfg = MatchConfig::default();
        let d = densify(&straight(3.0, 0, 100), &cfg);
        assert!(d.covered.iter().all(|&c| c));
        assert!(d.xs.iter().all(|&x| x == 3.0));
        assert!(d.zs.iter().all(|&z| z == 0.0));
    }

    #[test]
    fn densify_partial_lane() {
        let cfg = MatchConfig::default();
        let d = densify(&straight(3.0, 10, 50), &cfg);
        let covered: Vec<f64> = (0..51).filter(|&i| d.covered[i]).map(|i| cfg.dense_y_positions[i]).collect();
        let expected: Vec<f64> = cfg.dense_y_positions.iter().copied().filter(|y| (10.0..=50.0).contains(y)).collect();
        assert_eq!(covered, expected);
    }

    #[test]
    fn densify_visibility_gap() {
        let cfg = MatchConfig::default();
        let lane = straight(1.0, 0, 100);
        let vis = lane.points().iter().map(|p| !(p.y > 20.0 && p.y < 30.0)).collect();
        let lane = Lane3D::new(LaneCategory::Laneline, lane.points().to_vec(), vis, 1.0).unwrap();
        let d = densify(&lane, &cfg);
        let gap: Vec<f64> = (0..51).filter(|&i| !d.covered[i]).map(|i| cfg.dense_y_positions[i]).collect();
        assert_eq!(gap, vec![22.0, 24.0, 26.0, 28.0]);
    }

    #[test]
    fn cost_closed_forms() {
        let cfg = MatchConfig::default();
        let a = dense(|_| 1.0, |i| (5..25).contains(&i));
        let b = dense(|_| 1.0, |i| (5..29).contains(&i));
        let (c, _) = lane_cost(&a, &b, &cfg).unwrap();
        assert_abs_diff_eq!(c, 6.0f64.sqrt(), epsilon = 1e-12);

        let b = dense(|_| 1.3, |i| (5..25).contains(&i));
        let (c, _) = lane_cost(&a, &b, &cfg).unwrap();
        let oracle = (0..20).map(|_| (1.0f64 - 1.3).powi(2)).sum::<f64>().sqrt();
        assert_abs_diff_eq!(c, oracle, epsilon = 1e-15);
        assert_abs_diff_eq!(c, 1.8f64.sqrt(), epsilon = 1e-12);

        let (c, _) = lane_cost(&a, &a, &cfg).unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn squared_edit_penalty() {
        let cfg = MatchConfig { edit_penalty: EditPenalty::Squared, ..MatchConfig::default() };
        let a = dense(|_| 1.0, |i| (5..25).contains(&i));
        let b = dense(|_| 1.0, |i| (5..29).contains(&i));
        let (c, _) = lane_cost(&a, &b, &cfg).unwrap();
        assert_abs_diff_eq!(c, (4.0f64 * 2.25).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn length_mismatch() {
        let cfg = MatchConfig::default();
        let a = dense(|_| 0.0, |_| true);
        let mut b = a.clone();
        b.xs.pop();
        b.zs.pop();
        b.covered.pop();
        assert!(matches!(lane_cost(&a, &b, &cfg), Err(MatchError::LengthMismatch(51, 50))));
    }

    #[test]
    fn assignment_small_cases() {
        assert_eq!(min_cost_assign(&[0.0, 5.0, 5.0, 0.0], 2, 2), vec![(0, 0), (1, 1)]);
        let c = [1.0, 2.0, 2.0, 100.0];
        let a = min_cost_assign(&c, 2, 2);
        assert_eq!(a, vec![(0, 1), (1, 0)]);
        assert_eq!(assignment_total(&c, 2, &a), 4.0);
        assert!(min_cost_assign(&[], 0, 3).is_empty());
        assert_eq!(min_cost_assign(&[3.0, 1.0, 2.0], 1, 3), vec![(0, 1)]);
        assert_eq!(min_cost_assign(&[3.0, 1.0, 2.0], 3, 1), vec![(1, 0)]);
    }

    #[test]
    fn identical_sets_match() {
        let cfg = MatchConfig::default();
        let lanes = vec![straight(-3.5, 3, 90), straight(0.0, 3, 100), straight(3.5, 10, 60)];
        let r = match_frame(&lanes, &lanes, &cfg);
        assert!(r.pred_matched.iter().all(|&m| m));
        assert!(r.gt_matched.iter().all(|&m| m));
        assert!(r.assignment.iter().all(|a| a.pred == a.gt && a.cost == 0.0));
    }

    #[test]
    fn seventy_five_percent_boundary() {
        let cfg = MatchConfig::default();
        // 20 covered positions: y = 10, 12, ..., 48
        let gt = straight(0.0, 10, 48);
        let pts = gt
            .points()
            .iter()
            .map(|p| EgoPoint::new(if p.y >= 40.0 { 2.0 } else { 0.0 }, p.y, 0.0))
            .collect();
        let pred = Lane3D::fully_visible(LaneCategory::Laneline, pts).unwrap();
        let d = densify(&gt, &cfg);
        assert_eq!(d.num_covered(), 20);
        // displaced at 40..48 -> 5 dense positions, 15 within threshold
        let r = match_frame(&[pred], &[gt], &cfg);
        assert!(r.gt_matched[0]);
        assert!(r.pred_matched[0]);
    }

    #[test]
    fn below_seventy_five_percent_fails() {
        let cfg = MatchConfig::default();
        let gt = straight(0.0, 10, 48);
        let pts = gt
            .points()
            .iter()
            .map(|p| EgoPoint::new(if p.y >= 38.0 { 2.0 } else { 0.0 }, p.y, 0.0))
            .collect();
        let pred = Lane3D::fully_visible(LaneCategory::Laneline, pts).unwrap();
        let r = match_frame(&[pred], &[gt], &cfg);
        assert!(!r.gt_matched[0]);
    }

    #[test]
    fn distance_exactly_dmax_is_not_close() {
        let cfg = MatchConfig::default();
        let r = match_frame(&[straight(1.5, 0, 100)], &[straight(0.0, 0, 100)], &cfg);
        assert!(!r.gt_matched[0] && !r.pred_matched[0]);
    }

    #[test]
    fn empty_sets() {
        let cfg = MatchConfig::default();
        let r = match_frame(&[straight(0.0, 0, 50)], &[], &cfg);
        assert!(r.assignment.is_empty());
        assert_eq!(r.pred_matched, vec![false]);
        let r = match_frame(&[], &[], &cfg);
        assert!(r.assignment.is_empty() && r.gt_matched.is_empty());
    }

    #[test]
    fn short_prediction_on_long_gt() {
        // pred covers 10..30 exactly on top of a gt covering 0..100:
        // all pred positions close -> pred matched; gt has 11 of 50 covered positions close -> unmatched
        let cfg = MatchConfig::default();
        let r = match_frame(&[straight(0.0, 10, 30)], &[straight(0.0, 1, 100)], &cfg);
        assert!(r.pred_matched[0]);
        assert!(!r.gt_matched[0]);
    }
}
