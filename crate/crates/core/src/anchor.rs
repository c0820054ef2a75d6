//! Geometry-guided anchor representation.
//!
//! Anchors are vertical lines `x̄ = X_A^i` in the virtual top-view. A lane is
//! stored on the anchor nearest to its top-view position at `y_ref`, as
//! per-`y_j` lateral offsets `x̄ − X_A^i`, heights `z` and visibilities, plus an
//! existence probability. Because offsets live in the top-view, decoding goes
//! back to the ego frame through [`topview_to_ego`].

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geometry::{ego_to_topview, topview_to_ego, GeometryError, TopViewGrid, TopViewPoint};
use crate::lane::{Lane3D, LaneCategory, Profile};

/// The eleven anchor y-positions, meters.
pub const DEFAULT_Y_POSITIONS: [f64; 11] = [3.0, 5.0, 10.0, 15.0, 20.0, 30.0, 40.0, 50.0, 65.0, 80.0, 100.0];
pub const DEFAULT_Y_REF: f64 = 5.0;
pub const DEFAULT_NUM_ANCHORS: usize = 26;
pub const DEFAULT_PROB_THRESHOLD: f64 = 0.5;
pub const DEFAULT_VIS_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CodecError {
    #[error("invalid anchor config: {0}")]
    InvalidConfig(&'static str),
    #[error("lane top-view y-range [{y_min}, {y_max}] does not cover y_ref = {y_ref}")]
    LaneDoesNotCoverYref { y_min: f64, y_max: f64, y_ref: f64 },
    #[error("tensor shape {got:?} does not match config {expected:?}")]
    ShapeMismatch { got: (usize, usize), expected: (usize, usize) },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorConfig {
    /// Anchor lateral positions `X_A^i`, strictly increasing.
    pub anchor_x_positions: Vec<f64>,
    /// Anchor y-positions `y_j`, strictly increasing.
    pub y_positions: Vec<f64>,
    pub y_ref: f64,
    pub top_view_grid: TopViewGrid,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        let grid = TopViewGrid::default();
        Self {
            anchor_x_positions: equally_spaced(grid.x_range.0, grid.x_range.1, DEFAULT_NUM_ANCHORS),
            y_positions: DEFAULT_Y_POSITIONS.to_vec(),
            y_ref: DEFAULT_Y_REF,
            top_view_grid: grid,
        }
    }
}

/// `n` positions from `lo` to `hi` inclusive.
pub fn equally_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite()) && v.windows(2).all(|w| w[0] < w[1])
}

impl AnchorConfig {
    pub fn validate(&self) -> Result<(), CodecError> {
        if self.anchor_x_positions.is_empty() {
            return Err(CodecError::InvalidConfig("at least one anchor is required"));
        }
        if self.y_positions.len() < 2 {
            return Err(CodecError::InvalidConfig("at least two y-positions are required"));
        }
        if !strictly_increasing(&self.anchor_x_positions) {
            return Err(CodecError::InvalidConfig("anchor x-positions must be strictly increasing"));
        }
        if !strictly_increasing(&self.y_positions) {
            return Err(CodecError::InvalidConfig("y-positions must be strictly increasing"));
        }
        let (lo, hi) = (self.y_positions[0], self.y_positions[self.y_positions.len() - 1]);
        if !(lo <= self.y_ref && self.y_ref <= hi) {
            return Err(CodecError::InvalidConfig("y_ref must lie within the y-positions"));
        }
        self.top_view_grid.validate()?;
        Ok(())
    }

    pub fn num_anchors(&self) -> usize {
        self.anchor_x_positions.len()
    }

    pub fn num_y(&self) -> usize {
        self.y_positions.len()
    }
}

/// Anchor attributes of one lane type, anchor-major (`[i * K + j]`).
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    pub x_offsets: Vec<f64>,
    pub heights: Vec<f64>,
    pub visibility: Vec<f64>,
    pub prob: Vec<f64>,
}

impl AnchorSet {
    pub fn zeros(num_anchors: usize, num_y: usize) -> Self {
        Self {
            x_offsets: vec![0.0; num_anchors * num_y],
            heights: vec![0.0; num_anchors * num_y],
            visibility: vec![0.0; num_anchors * num_y],
            prob: vec![0.0; num_anchors],
        }
    }
}

/// Per-type anchor attributes for N anchors × K y-positions.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorTensor {
    num_anchors: usize,
    num_y: usize,
    laneline: AnchorSet,
    centerline: AnchorSet,
}

impl AnchorTensor {
    pub fn zeros(num_anchors: usize, num_y: usize) -> Self {
        Self {
            num_anchors,
            num_y,
            laneline: AnchorSet::zeros(num_anchors, num_y),
            centerline: AnchorSet::zeros(num_anchors, num_y),
        }
    }

    /// Builds a tensor from raw sets, checking shapes, finiteness and `[0, 1]` ranges.
    pub fn from_sets(num_anchors: usize, num_y: usize, laneline: AnchorSet, centerline: AnchorSet) -> Result<Self, CodecError> {
        let t = Self { num_anchors, num_y, laneline, centerline };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        let nk = self.num_anchors * self.num_y;
        for set in [&self.laneline, &self.centerline] {
            let shapes_ok = set.x_offsets.len() == nk
                && set.heights.len() == nk
                && set.visibility.len() == nk
                && set.prob.len() == self.num_anchors;
            if !shapes_ok {
                return Err(CodecError::InvalidConfig("anchor set arrays do not match N x K"));
            }
            if !set.x_offsets.iter().chain(&set.heights).all(|v| v.is_finite()) {
                return Err(CodecError::InvalidConfig("anchor offsets and heights must be finite"));
            }
            if !set.visibility.iter().chain(&set.prob).all(|v| (0.0..=1.0).contains(v)) {
                return Err(CodecError::InvalidConfig("visibility and probability must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn num_anchors(&self) -> usize {
        self.num_anchors
    }

    pub fn num_y(&self) -> usize {
        self.num_y
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.num_anchors, self.num_y)
    }

    pub fn set(&self, category: LaneCategory) -> &AnchorSet {
        match category {
            LaneCategory::Laneline => &self.laneline,
            LaneCategory::Centerline => &self.centerline,
        }
    }

    pub fn set_mut(&mut self, category: LaneCategory) -> &mut AnchorSet {
        match category {
            LaneCategory::Laneline => &mut self.laneline,
            LaneCategory::Centerline => &mut self.centerline,
        }
    }

    #[inline]
    pub fn index(&self, anchor: usize, y: usize) -> usize {
        anchor * self.num_y + y
    }

    fn check_shape(&self, cfg: &AnchorConfig) -> Result<(), CodecError> {
        let expected = (cfg.num_anchors(), cfg.num_y());
        if self.shape() != expected {
            return Err(CodecError::ShapeMismatch { got: self.shape(), expected });
        }
        Ok(())
    }
}

/// Two lanes of one type claimed the same anchor; `dropped` lost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnchorCollision {
    pub category: LaneCategory,
    pub anchor: usize,
    pub kept: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SkipReason {
    DoesNotCoverYref,
    NoVisiblePositions,
    Geometry(GeometryError),
}

/// A lane that could not be encoded at all.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedLane {
    pub lane: usize,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodeOutput {
    pub tensor: AnchorTensor,
    pub collisions: Vec<AnchorCollision>,
    pub skipped: Vec<SkippedLane>,
}

fn topview_profile(lane: &Lane3D, cam_height: f64) -> Result<Profile, GeometryError> {
    let n = lane.len();
    let mut keys = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for p in lane.points() {
        let tv = ego_to_topview(*p, cam_height)?;
        keys.push(tv.y_bar);
        values.push((tv.x_bar, p.z));
    }
    Ok(Profile::new(keys, values, lane.visibility().to_vec()))
}

fn nearest_anchor(x_bar: f64, anchors: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, &a) in anchors.iter().enumerate() {
        let d = libm::fabs(x_bar - a);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

fn associate_profile(prof: &Profile, cfg: &AnchorConfig) -> Result<(usize, f64), CodecError> {
    match prof.sample(cfg.y_ref) {
        Some(s) => {
            let x_bar = s.value.0;
            let i = nearest_anchor(x_bar, &cfg.anchor_x_positions);
            Ok((i, libm::fabs(x_bar - cfg.anchor_x_positions[i])))
        }
        None => {
            let (y_min, y_max) = prof.key_range();
            Err(CodecError::LaneDoesNotCoverYref { y_min, y_max, y_ref: cfg.y_ref })
        }
    }
}

/// Index of the anchor closest to the lane's top-view `x̄` at `y_ref`; ties go to the smaller index.
pub fn associate_anchor(lane: &Lane3D, cfg: &AnchorConfig, cam_height: f64) -> Result<usize, CodecError> {
    cfg.validate()?;
    let prof = topview_profile(lane, cam_height)?;
    associate_profile(&prof, cfg).map(|(i, _)| i)
}

struct Candidate {
    lane: usize,
    category: LaneCategory,
    anchor: usize,
    distance: f64,
    offsets: Vec<f64>,
    heights: Vec<f64>,
    visibility: Vec<f64>,
}

fn encode_lane(prof: &Profile, anchor_x: f64, cfg: &AnchorConfig) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let grid = &cfg.top_view_grid;
    let k = cfg.num_y();
    let mut values: Vec<Option<(f64, f64)>> = vec![None; k];
    for (j, &y) in cfg.y_positions.iter().enumerate() {
        if let Some(s) = prof.sample(y) {
            if s.covered && grid.contains(TopViewPoint::new(s.value.0, y)) {
                values[j] = Some(s.value);
            }
        }
    }
    let covered: Vec<usize> = (0..k).filter(|&j| values[j].is_some()).collect();
    if covered.is_empty() {
        return None;
    }
    let mut offsets = vec![0.0; k];
    let mut heights = vec![0.0; k];
    let mut visibility = vec![0.0; k];
    for j in 0..k {
        let (x_bar, z) = match values[j] {
            Some(v) => {
                visibility[j] = 1.0;
                v
            }
            None => {
                // flat extrapolation from the nearest covered position, ties to the lower one
                let y = cfg.y_positions[j];
                let mut src = covered[0];
                for &c in &covered[1..] {
                    if libm::fabs(cfg.y_positions[c] - y) < libm::fabs(cfg.y_positions[src] - y) {
                        src = c;
                    }
                }
                values[src].unwrap()
            }
        };
        offsets[j] = x_bar - anchor_x;
        heights[j] = z;
    }
    Some((offsets, heights, visibility))
}

/// Encodes ground-truth lanes into an anchor tensor.
///
/// Lanes that cannot be placed (no coverage of `y_ref`, no visible anchor
/// position, height at the camera center) are listed in `skipped`. When two
/// lanes of one type pick the same anchor, the one closer to the anchor at
/// `y_ref` wins and the other is listed in `collisions`.
pub fn encode(lanes: &[Lane3D], cfg: &AnchorConfig, cam_height: f64) -> Result<EncodeOutput, CodecError> {
    cfg.validate()?;
    if !(cam_height.is_finite() && cam_height > 0.0) {
        return Err(GeometryError::InvalidHeight(cam_height).into());
    }
    let mut skipped = Vec::new();
    let mut candidates: Vec<Candidate> = Vec::new();
    for (li, lane) in lanes.iter().enumerate() {
        let prof = match topview_profile(lane, cam_height) {
            Ok(p) => p,
            Err(e) => {
                skipped.push(SkippedLane { lane: li, reason: SkipReason::Geometry(e) });
                continue;
            }
        };
        let Ok((anchor, distance)) = associate_profile(&prof, cfg) else {
            skipped.push(SkippedLane { lane: li, reason: SkipReason::DoesNotCoverYref });
            continue;
        };
        let Some((offsets, heights, visibility)) = encode_lane(&prof, cfg.anchor_x_positions[anchor], cfg) else {
            skipped.push(SkippedLane { lane: li, reason: SkipReason::NoVisiblePositions });
            continue;
        };
        candidates.push(Candidate { lane: li, category: lane.category(), anchor, distance, offsets, heights, visibility });
    }

    let mut tensor = AnchorTensor::zeros(cfg.num_anchors(), cfg.num_y());
    let mut owner: Vec<[Option<usize>; 2]> = vec![[None, None]; cfg.num_anchors()];
    let mut collisions = Vec::new();
    for (ci, cand) in candidates.iter().enumerate() {
        let slot = &mut owner[cand.anchor][cand.category as usize];
        match *slot {
            None => *slot = Some(ci),
            Some(prev) => {
                let incumbent = &candidates[prev];
                let (kept, dropped) = if cand.distance < incumbent.distance { (ci, prev) } else { (prev, ci) };
                *slot = Some(kept);
                collisions.push(AnchorCollision {
                    category: cand.category,
                    anchor: cand.anchor,
                    kept: candidates[kept].lane,
                    dropped: candidates[dropped].lane,
                });
            }
        }
    }

    let k = cfg.num_y();
    for (anchor, slots) in owner.iter().enumerate() {
        for ci in slots.iter().flatten() {
            let cand = &candidates[*ci];
            let set = tensor.set_mut(cand.category);
            let base = anchor * k;
            set.x_offsets[base..base + k].copy_from_slice(&cand.offsets);
            set.heights[base..base + k].copy_from_slice(&cand.heights);
            set.visibility[base..base + k].copy_from_slice(&cand.visibility);
            set.prob[anchor] = 1.0;
        }
    }
    Ok(EncodeOutput { tensor, collisions, skipped })
}

/// Decodes an anchor tensor into ego-frame lanes.
///
/// Anchors with `prob >= prob_threshold` emit one point per `y_j` whose
/// visibility reaches `vis_threshold`; points that cannot be lifted to the ego
/// frame or would break strictly increasing `y` are skipped, and anchors left
/// with fewer than two points are dropped. Lanelines come before centerlines,
/// each in anchor order.
pub fn decode(
    tensor: &AnchorTensor,
    cfg: &AnchorConfig,
    cam_height: f64,
    prob_threshold: f64,
    vis_threshold: f64,
) -> Result<Vec<Lane3D>, CodecError> {
    cfg.validate()?;
    tensor.check_shape(cfg)?;
    let k = cfg.num_y();
    let mut lanes = Vec::new();
    for category in LaneCategory::ALL {
        let set = tensor.set(category);
        for (anchor, &anchor_x) in cfg.anchor_x_positions.iter().enumerate() {
            let prob = set.prob[anchor];
            if !(prob >= prob_threshold) {
                continue;
            }
            let mut points = Vec::with_capacity(k);
            for (j, &y) in cfg.y_positions.iter().enumerate() {
                let idx = anchor * k + j;
                if !(set.visibility[idx] >= vis_threshold) {
                    continue;
                }
                let tv = TopViewPoint::new(anchor_x + set.x_offsets[idx], y);
                let Ok(p) = topview_to_ego(tv, set.heights[idx], cam_height) else {
                    continue;
                };
                if points.last().is_none_or(|last: &crate::geometry::EgoPoint| p.y > last.y) && p.is_finite() {
                    points.push(p);
                }
            }
            if points.len() < 2 {
                continue;
            }
            let n = points.len();
            if let Ok(lane) = Lane3D::new(category, points, vec![true; n], prob.clamp(0.0, 1.0)) {
                lanes.push(lane);
            }
        }
    }
    Ok(lanes)
}
