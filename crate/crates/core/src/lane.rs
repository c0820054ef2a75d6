use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::EgoPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaneCategory {
    Laneline,
    Centerline,
}

impl LaneCategory {
    pub const ALL: [LaneCategory; 2] = [LaneCategory::Laneline, LaneCategory::Centerline];

    pub fn as_str(&self) -> &'static str {
        match self {
            LaneCategory::Laneline => "laneline",
            LaneCategory::Centerline => "centerline",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "laneline" => Some(LaneCategory::Laneline),
            "centerline" => Some(LaneCategory::Centerline),
            _ => None,
        }
    }
}

impl fmt::Display for LaneCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LaneError {
    #[error("a lane needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("lane y must be strictly increasing (violated at point {0})")]
    NonIncreasingY(usize),
    #[error("visibility has {visibility} entries for {points} points")]
    VisibilityLength { points: usize, visibility: usize },
    #[error("lane probability {0} is outside [0, 1]")]
    InvalidProb(f64),
    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),
}

/// Typed 3D polyline in the ego frame with per-point visibility.
#[derive(Debug, Clone, PartialEq)]
pub struct Lane3D {
    category: LaneCategory,
    points: Vec<EgoPoint>,
    visibility: Vec<bool>,
    prob: f64,
}

impl Lane3D {
    pub fn new(category: LaneCategory, points: Vec<EgoPoint>, visibility: Vec<bool>, prob: f64) -> Result<Self, LaneError> {
        if points.len() < 2 {
            return Err(LaneError::TooFewPoints(points.len()));
        }
        if visibility.len() != points.len() {
            return Err(LaneError::VisibilityLength { points: points.len(), visibility: visibility.len() });
        }
        if !(0.0..=1.0).contains(&prob) {
            return Err(LaneError::InvalidProb(prob));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(LaneError::NonFinite(i));
        }
        if let Some(i) = points.windows(2).position(|w| w[1].y <= w[0].y) {
            return Err(LaneError::NonIncreasingY(i + 1));
        }
        Ok(Self { category, points, visibility, prob })
    }

    /// All points visible, ground-truth probability 1.
    pub fn fully_visible(category: LaneCategory, points: Vec<EgoPoint>) -> Result<Self, LaneError> {
        let n = points.len();
        Self::new(category, points, alloc::vec![true; n], 1.0)
    }

    pub fn category(&self) -> LaneCategory {
        self.category
    }

    pub fn points(&self) -> &[EgoPoint] {
        &self.points
    }

    pub fn visibility(&self) -> &[bool] {
        &self.visibility
    }

    pub fn prob(&self) -> f64 {
        self.prob
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn with_prob(mut self, prob: f64) -> Result<Self, LaneError> {
        if !(0.0..=1.0).contains(&prob) {
            return Err(LaneError::InvalidProb(prob));
        }
        self.prob = prob;
        Ok(self)
    }

    /// Shifts every point laterally and vertically.
    pub fn translated(&self, dx: f64, dz: f64) -> Self {
        let points = self.points.iter().map(|p| EgoPoint::new(p.x + dx, p.y, p.z + dz)).collect();
        Self { points, ..self.clone() }
    }
}

/// Queries this close to a vertex key resolve to the vertex itself, meters.
pub(crate) const KEY_TOLERANCE: f64 = 1e-9;

/// Two attributes sampled along a 1D key (e.g. `(x, z)` against `y`).
///
/// Keys need not be monotone; a query resolves to the first segment that
/// contains it. A position is *covered* when it sits on a visible vertex or
/// strictly inside a segment whose endpoints are both visible.
#[derive(Debug, Clone)]
pub(crate) struct Profile {
    keys: Vec<f64>,
    values: Vec<(f64, f64)>,
    visible: Vec<bool>,
    increasing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ProfileSample {
    pub value: (f64, f64),
    pub covered: bool,
}

impl Profile {
    pub fn new(keys: Vec<f64>, values: Vec<(f64, f64)>, visible: Vec<bool>) -> Self {
        debug_assert!(keys.len() == values.len() && keys.len() == visible.len());
        let increasing = keys.windows(2).all(|w| w[0] < w[1]);
        Self { keys, values, visible, increasing }
    }

    pub fn key_range(&self) -> (f64, f64) {
        self.keys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &k| (lo.min(k), hi.max(k)))
    }

    pub fn sample(&self, t: f64) -> Option<ProfileSample> {
        if self.increasing {
            self.sample_sorted(t)
        } else {
            self.sample_scan(t)
        }
    }

    fn sample_sorted(&self, t: f64) -> Option<ProfileSample> {
        let n = self.keys.len();
        if n == 0 {
            return None;
        }
        // keys that went through a frame transform may miss an end by rounding
        for end in [0, n - 1] {
            if libm::fabs(self.keys[end] - t) <= KEY_TOLERANCE {
                return Some(ProfileSample { value: self.values[end], covered: self.visible[end] });
            }
        }
        if t < self.keys[0] || t > self.keys[n - 1] {
            return None;
        }
        let idx = self.keys.partition_point(|&k| k < t);
        if idx < n && self.keys[idx] == t {
            return Some(ProfileSample { value: self.values[idx], covered: self.visible[idx] });
        }
        // keys[idx-1] < t < keys[idx]
        Some(self.interp(idx - 1, t))
    }

    fn sample_scan(&self, t: f64) -> Option<ProfileSample> {
        let mut found: Option<ProfileSample> = None;
        let mut covered = false;
        for i in 0..self.keys.len() {
            if libm::fabs(self.keys[i] - t) <= KEY_TOLERANCE {
                found.get_or_insert(ProfileSample { value: self.values[i], covered: false });
                covered |= self.visible[i];
            }
            if i + 1 < self.keys.len() {
                let (a, b) = (self.keys[i], self.keys[i + 1]);
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                if lo < t && t < hi {
                    let s = self.interp(i, t);
                    found.get_or_insert(s);
                    covered |= s.covered;
                }
            }
        }
        found.map(|s| ProfileSample { value: s.value, covered })
    }

    fn interp(&self, i: usize, t: f64) -> ProfileSample {
        let (k0, k1) = (self.keys[i], self.keys[i + 1]);
        let w = (t - k0) / (k1 - k0);
        let (a0, b0) = self.values[i];
        let (a1, b1) = self.values[i + 1];
        ProfileSample {
            value: (a0 + w * (a1 - a0), b0 + w * (b1 - b0)),
            covered: self.visible[i] && self.visible[i + 1],
        }
    }
}
