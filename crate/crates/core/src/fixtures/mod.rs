//! Deterministic synthetic driving scenes.
//!
//! A scene is a parametric road (lateral polynomial centerline, piecewise-linear
//! height profile, parallel lanelines) flanked by terrain, with box-shaped
//! vehicles standing on it. The camera pose is drawn from a seeded RNG, the
//! surfaces are z-buffered into a depth map (ego-frame forward distance `y` by
//! default) and a semantic map, and lane points are then labeled by occlusion type.

mod occlusion;
mod perturb;
mod render;

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{CameraModel, EgoPoint, GeometryError, Intrinsics};
use crate::lane::{Lane3D, LaneCategory};
use crate::raster::Raster;

pub use occlusion::{finalize_ground_truth, label_occlusion, sample_depth, DepthSample, OcclusionLabel, BEYOND_RANGE_M, DEFAULT_OCCLUSION_EPS};
pub use perturb::{perturb_predictions, NoiseConfig, ProbModel};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FixtureError {
    #[error("invalid road spec: {0}")]
    InvalidSpec(&'static str),
    #[error("invalid camera ranges: {0}")]
    InvalidRanges(&'static str),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Per-pixel semantic class stored in the semantic map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum SemanticClass {
    Sky = 0,
    Road = 1,
    Terrain = 2,
    Vehicle = 3,
}

impl SemanticClass {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Self::Sky),
            1 => Some(Self::Road),
            2 => Some(Self::Terrain),
            3 => Some(Self::Vehicle),
            _ => None,
        }
    }
}

/// Axis-aligned box in the ego frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxOccluder {
    pub min: EgoPoint,
    pub max: EgoPoint,
}

/// Vehicle placement request: footprint center, size `(width, length, height)`,
/// base resting on the road surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    pub x: f64,
    pub y: f64,
    pub size: (f64, f64, f64),
}

fn default_margin() -> f64 {
    1.0
}

fn default_terrain_width() -> f64 {
    60.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadSpec {
    /// `x_c(y) = Σ c_k · y^k`.
    pub centerline_coeffs: Vec<f64>,
    /// `(y, z)` knots, strictly increasing in `y`; flat beyond the ends, flat zero when empty.
    #[serde(default)]
    pub height_profile: Vec<(f64, f64)>,
    /// Laneline lateral offsets from the centerline curve.
    pub lane_offsets: Vec<f64>,
    pub y_span: (f64, f64),
    /// Paved width beyond the outermost lanelines.
    #[serde(default = "default_margin")]
    pub road_margin: f64,
    /// Width of the terrain skirt on each side of the road.
    #[serde(default = "default_terrain_width")]
    pub terrain_width: f64,
    #[serde(default)]
    pub vehicles: Vec<VehicleSpec>,
    /// Extra vehicles dropped on random lanes by the seed.
    #[serde(default)]
    pub random_vehicles: usize,
}

impl RoadSpec {
    /// Flat straight road over `[1, 150]` m with four lanelines 3.5 m apart.
    pub fn flat_straight() -> Self {
        Self {
            centerline_coeffs: alloc::vec![0.0],
            height_profile: Vec::new(),
            lane_offsets: alloc::vec![-5.25, -1.75, 1.75, 5.25],
            y_span: (1.0, 150.0),
            road_margin: default_margin(),
            terrain_width: default_terrain_width(),
            vehicles: Vec::new(),
            random_vehicles: 0,
        }
    }

    pub fn center_x(&self, y: f64) -> f64 {
        self.centerline_coeffs.iter().rev().fold(0.0, |acc, &c| acc * y + c)
    }

    pub fn height(&self, y: f64) -> f64 {
        let knots = &self.height_profile;
        match knots.len() {
            0 => 0.0,
            _ if y <= knots[0].0 => knots[0].1,
            n if y >= knots[n - 1].0 => knots[n - 1].1,
            _ => {
                let i = knots.partition_point(|k| k.0 <= y);
                let (y0, z0) = knots[i - 1];
                let (y1, z1) = knots[i];
                z0 + (z1 - z0) * (y - y0) / (y1 - y0)
            }
        }
    }

    pub fn validate(&self, max_height: f64) -> Result<(), FixtureError> {
        let (y0, y1) = self.y_span;
        if !(y0.is_finite() && y1.is_finite() && y0 < y1) {
            return Err(FixtureError::InvalidSpec("y_span must satisfy y_start < y_end"));
        }
        if y0 < 0.0 {
            return Err(FixtureError::InvalidSpec("y_span must start in front of the camera"));
        }
        if self.centerline_coeffs.iter().any(|c| !c.is_finite()) {
            return Err(FixtureError::InvalidSpec("centerline coefficients must be finite"));
        }
        if self.lane_offsets.is_empty() || self.lane_offsets.iter().any(|o| !o.is_finite()) {
            return Err(FixtureError::InvalidSpec("at least one finite lane offset is required"));
        }
        if !self.height_profile.windows(2).all(|w| w[0].0 < w[1].0) {
            return Err(FixtureError::InvalidSpec("height profile knots must be strictly increasing in y"));
        }
        if self.height_profile.iter().any(|k| !(k.0.is_finite() && k.1.is_finite())) {
            return Err(FixtureError::InvalidSpec("height profile knots must be finite"));
        }
        // piecewise linear: extremes sit on knots
        if self.height_profile.iter().any(|k| libm::fabs(k.1) >= max_height) {
            return Err(FixtureError::InvalidSpec("|z| must stay below the camera height"));
        }
        if !(self.road_margin >= 0.0 && self.terrain_width >= 0.0) {
            return Err(FixtureError::InvalidSpec("road margin and terrain width must be nonnegative"));
        }
        for v in &self.vehicles {
            let (w, l, h) = v.size;
            if !(w > 0.0 && l > 0.0 && h > 0.0 && v.x.is_finite() && v.y.is_finite()) {
                return Err(FixtureError::InvalidSpec("vehicle boxes need positive size and finite position"));
            }
        }
        Ok(())
    }

    fn sorted_offsets(&self) -> Vec<f64> {
        let mut o = self.lane_offsets.clone();
        o.sort_by(f64::total_cmp);
        o.dedup();
        o
    }

    fn lane_at(&self, category: LaneCategory, offset: f64, step: f64) -> Option<Lane3D> {
        let (y0, y1) = self.y_span;
        let n = libm::floor((y1 - y0) / step + 1e-9) as usize + 1;
        let pts: Vec<EgoPoint> = (0..n)
            .map(|i| {
                let y = y0 + step * i as f64;
                EgoPoint::new(self.center_x(y) + offset, y, self.height(y))
            })
            .collect();
        Lane3D::fully_visible(category, pts).ok()
    }

    /// Lanelines at every offset and centerlines halfway between neighbors, sampled every `step` meters.
    pub fn lanes(&self, step: f64) -> Vec<Lane3D> {
        let offsets = self.sorted_offsets();
        let mut out: Vec<Lane3D> = offsets.iter().filter_map(|&o| self.lane_at(LaneCategory::Laneline, o, step)).collect();
        for w in offsets.windows(2) {
            out.extend(self.lane_at(LaneCategory::Centerline, 0.5 * (w[0] + w[1]), step));
        }
        out
    }

    /// Box for a vehicle resting on the surface at its footprint center.
    pub fn vehicle_box(&self, v: &VehicleSpec) -> BoxOccluder {
        let (w, l, h) = v.size;
        let base = self.height(v.y);
        BoxOccluder {
            min: EgoPoint::new(v.x - 0.5 * w, v.y - 0.5 * l, base),
            max: EgoPoint::new(v.x + 0.5 * w, v.y + 0.5 * l, base + h),
        }
    }

    fn road_edges(&self) -> (f64, f64) {
        let o = self.sorted_offsets();
        (o[0] - self.road_margin, o[o.len() - 1] + self.road_margin)
    }
}

/// Sampling ranges for the camera pose plus fixed intrinsics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraRanges {
    pub height_m: (f64, f64),
    pub pitch_deg: (f64, f64),
    pub intrinsics: Intrinsics,
    pub image_size: (u32, u32),
}

impl Default for CameraRanges {
    fn default() -> Self {
        Self {
            height_m: (1.4, 1.8),
            pitch_deg: (0.0, 10.0),
            intrinsics: Intrinsics { fx: 2015.0, fy: 2015.0, cx: 960.0, cy: 540.0 },
            image_size: (1920, 1080),
        }
    }
}

impl CameraRanges {
    fn validate(&self) -> Result<(), FixtureError> {
        let (h0, h1) = self.height_m;
        let (p0, p1) = self.pitch_deg;
        if !(h0 > 0.0 && h0 <= h1 && h1.is_finite()) {
            return Err(FixtureError::InvalidRanges("height range must be positive and ordered"));
        }
        if !(p0 >= 0.0 && p0 <= p1 && p1 < 90.0) {
            return Err(FixtureError::InvalidRanges("pitch range must be ordered within [0, 90) degrees"));
        }
        Ok(())
    }
}

/// What the depth map stores per pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthKind {
    /// Ego-frame forward distance `y`, compared directly against lane-point `y`.
    #[default]
    EgoForward,
    /// Distance along the optical axis.
    CameraAxis,
}

/// Spacing between consecutive ground-truth lane samples, meters.
pub const LANE_SAMPLE_STEP: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneFixture {
    pub camera: CameraModel,
    pub lanes_gt: Vec<Lane3D>,
    /// Depth of the nearest surface as described by `depth_kind`; `+∞` for sky.
    pub depth_map: Raster<f32>,
    pub depth_kind: DepthKind,
    /// [`SemanticClass`] codes.
    pub semantic_map: Raster<u8>,
    pub occluders: Vec<BoxOccluder>,
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo { rng.random_range(lo..hi) } else { lo }
}

fn draw_camera(rng: &mut ChaCha8Rng, ranges: &CameraRanges) -> Result<CameraModel, FixtureError> {
    let h = uniform(rng, ranges.height_m);
    let pitch = uniform(rng, ranges.pitch_deg).to_radians();
    Ok(CameraModel::new(h, pitch, ranges.intrinsics, ranges.image_size)?)
}

fn draw_vehicles(rng: &mut ChaCha8Rng, spec: &RoadSpec) -> Vec<VehicleSpec> {
    let offsets = spec.sorted_offsets();
    let (y0, y1) = spec.y_span;
    let y_hi = y1.min(y0 + 120.0);
    let mut out = Vec::with_capacity(spec.random_vehicles);
    for _ in 0..spec.random_vehicles {
        let lane_center = if offsets.len() >= 2 {
            let k = rng.random_range(0..offsets.len() - 1);
            0.5 * (offsets[k] + offsets[k + 1])
        } else {
            offsets[0]
        };
        let y = uniform(rng, (y0 + 10.0, y_hi.max(y0 + 10.0)));
        let size = (uniform(rng, (1.7, 2.0)), uniform(rng, (4.0, 5.0)), uniform(rng, (1.4, 1.7)));
        out.push(VehicleSpec { x: spec.center_x(y) + lane_center, y, size });
    }
    out
}

/// Lanes and camera only, skipping rasterization.
pub fn generate_lanes(spec: &RoadSpec, seed: u64, ranges: &CameraRanges) -> Result<(CameraModel, Vec<Lane3D>), FixtureError> {
    ranges.validate()?;
    spec.validate(ranges.height_m.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let camera = draw_camera(&mut rng, ranges)?;
    Ok((camera, spec.lanes(LANE_SAMPLE_STEP)))
}

/// Scene with an ego-forward depth map.
pub fn generate_scene(spec: &RoadSpec, seed: u64, ranges: &CameraRanges) -> Result<SceneFixture, FixtureError> {
    generate_scene_with_depth(spec, seed, ranges, DepthKind::EgoForward)
}

pub fn generate_scene_with_depth(
    spec: &RoadSpec,
    seed: u64,
    ranges: &CameraRanges,
    depth_kind: DepthKind,
) -> Result<SceneFixture, FixtureError> {
    ranges.validate()?;
    spec.validate(ranges.height_m.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let camera = draw_camera(&mut rng, ranges)?;
    let mut vehicles = spec.vehicles.clone();
    vehicles.extend(draw_vehicles(&mut rng, spec));
    let occluders: Vec<BoxOccluder> = vehicles.iter().map(|v| spec.vehicle_box(v)).collect();

    let mut tris = render::road_mesh(spec, spec.road_edges());
    for b in &occluders {
        tris.extend(render::box_mesh(b));
    }
    let (depth_map, semantic_map) = render::rasterize(&camera, &tris, depth_kind);
    Ok(SceneFixture { camera, lanes_gt: spec.lanes(LANE_SAMPLE_STEP), depth_map, depth_kind, semantic_map, occluders })
}
