//! Pitch-only pinhole camera and the transforms between the ego frame, the
//! image plane and the virtual top-view.
//!
//! Ego frame: origin on the road directly below the camera center, `x` lateral
//! (right), `y` forward, `z` up. The camera sits at `(0, 0, h)` and is pitched
//! down by `θ`. Image coordinates follow the usual `u` right / `v` down layout.
//!
//! The virtual top-view is what the image looks like once it is warped onto the
//! flat `z = 0` plane through the image/ground homography. A 3D point, its
//! top-view counterpart and the camera center lie on one ray, which gives the
//! closed-form, camera-angle independent relation
//! `x = x̄·(1 − z/h)`, `y = ȳ·(1 − z/h)`.

use nalgebra::{Matrix3, Matrix3x4, Vector3};
use serde::{Deserialize, Serialize};

use crate::raster::Raster;

/// Distance below the camera center at which the top-view relation is treated as degenerate.
pub const HEIGHT_EPS: f64 = 1e-6;
/// Minimum |w| accepted when dehomogenizing.
pub const HOMOGENEOUS_EPS: f64 = 1e-12;
/// Minimum depth along the optical axis for a point to count as in front of the camera.
pub const DEPTH_EPS: f64 = 1e-9;
/// Condition number above which the image/ground homography is rejected.
pub const MAX_HOMOGRAPHY_CONDITION: f64 = 1e12;

/// Lateral range of the default top-view grid, meters.
pub const TOPVIEW_X_RANGE: (f64, f64) = (-10.0, 10.0);
/// Longitudinal range of the default top-view grid, meters.
pub const TOPVIEW_Y_RANGE: (f64, f64) = (1.0, 101.0);
/// Default top-view resolution as (cols, rows).
pub const TOPVIEW_RESOLUTION: (usize, usize) = (208, 108);

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("invalid camera: {0}")]
    InvalidCamera(&'static str),
    #[error("camera height must be positive and finite, got {0}")]
    InvalidHeight(f64),
    #[error("point is behind the camera (depth {depth} m)")]
    PointBehindCamera { depth: f64 },
    #[error("image/ground homography is degenerate (condition number {condition:e})")]
    DegenerateHomography { condition: f64 },
    #[error("height {z} m is at or above the camera center at {height} m")]
    HeightAtCameraCenter { z: f64, height: f64 },
    #[error("homogeneous coordinate is too close to zero")]
    PointAtInfinity,
    #[error("mask is {got:?} pixels but the camera image is {expected:?}")]
    MaskSizeMismatch { got: (usize, usize), expected: (usize, usize) },
    #[error("invalid top-view grid")]
    InvalidGrid,
    #[error("non-finite coordinate")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl EgoPoint {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopViewPoint {
    pub x_bar: f64,
    pub y_bar: f64,
}

impl TopViewPoint {
    pub const fn new(x_bar: f64, y_bar: f64) -> Self {
        Self { x_bar, y_bar }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImagePoint {
    pub u: f64,
    pub v: f64,
}

/// Zero-skew pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Parses a row-major 3×3 matrix; skew and the last row must be exactly `[0 0 1]`.
    pub fn from_row_major(k: &[f64; 9]) -> Result<Self, GeometryError> {
        if k[1] != 0.0 || k[3] != 0.0 || k[6] != 0.0 || k[7] != 0.0 || k[8] != 1.0 {
            return Err(GeometryError::InvalidCamera("intrinsics must be zero-skew with last row [0, 0, 1]"));
        }
        Ok(Self { fx: k[0], fy: k[4], cx: k[2], cy: k[5] })
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        [self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0]
    }
}

/// Camera with known height above the ground origin and downward pitch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    height_m: f64,
    pitch_rad: f64,
    intrinsics: Intrinsics,
    image_size: (u32, u32),
}

impl CameraModel {
    pub fn new(
        height_m: f64,
        pitch_rad: f64,
        intrinsics: Intrinsics,
        image_size: (u32, u32),
    ) -> Result<Self, GeometryError> {
        if !(height_m.is_finite() && height_m > 0.0) {
            return Err(GeometryError::InvalidHeight(height_m));
        }
        if !(pitch_rad.is_finite() && (0.0..core::f64::consts::FRAC_PI_2).contains(&pitch_rad)) {
            return Err(GeometryError::InvalidCamera("pitch must lie in [0, pi/2)"));
        }
        let Intrinsics { fx, fy, cx, cy } = intrinsics;
        if !(fx.is_finite() && fy.is_finite() && fx > 0.0 && fy > 0.0) {
            return Err(GeometryError::InvalidCamera("focal lengths must be positive"));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(GeometryError::InvalidCamera("principal point must be finite"));
        }
        if image_size.0 == 0 || image_size.1 == 0 {
            return Err(GeometryError::InvalidCamera("image size must be positive"));
        }
        Ok(Self { height_m, pitch_rad, intrinsics, image_size })
    }

    pub fn height_m(&self) -> f64 {
        self.height_m
    }

    pub fn pitch_rad(&self) -> f64 {
        self.pitch_rad
    }

    pub fn intrinsics(&self) -> Intrinsics {
        self.intrinsics
    }

    /// (width, height) in pixels.
    pub fn image_size(&self) -> (u32, u32) {
        self.image_size
    }

    pub fn k_matrix(&self) -> Matrix3<f64> {
        self.intrinsics.matrix()
    }

    /// World-to-camera rotation `R` and translation `T = −R·C` for the camera center `C = (0, 0, h)`.
    pub fn rotation_translation(&self) -> (Matrix3<f64>, Vector3<f64>) {
        let (s, c) = libm::sincos(self.pitch_rad);
        let h = self.height_m;
        let r = Matrix3::new(1.0, 0.0, 0.0, 0.0, -s, -c, 0.0, c, -s);
        let t = Vector3::new(0.0, c * h, s * h);
        (r, t)
    }

    /// Full projection matrix `K·[R | T]`.
    pub fn projection_matrix(&self) -> Matrix3x4<f64> {
        let (r, t) = self.rotation_translation();
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        rt.set_column(3, &t);
        self.k_matrix() * rt
    }

    /// Ground (z = 0) to image homography `K·[R₁ R₂ | T]`.
    pub fn homography_ground_to_img(&self) -> Matrix3<f64> {
        let (r, t) = self.rotation_translation();
        self.k_matrix() * Matrix3::from_columns(&[r.column(0).into_owned(), r.column(1).into_owned(), t])
    }

    /// Image to flat-ground homography, the inverse of [`Self::homography_ground_to_img`].
    pub fn homography_img_to_ground(&self) -> Result<Matrix3<f64>, GeometryError> {
        let m = self.homography_ground_to_img();
        let sv = m.singular_values();
        let smax = sv.max();
        let smin = sv.min();
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !(condition <= MAX_HOMOGRAPHY_CONDITION) {
            return Err(GeometryError::DegenerateHomography { condition });
        }
        m.try_inverse().ok_or(GeometryError::DegenerateHomography { condition })
    }

    /// Depth of an ego point along the optical axis.
    pub fn depth_of(&self, p: EgoPoint) -> f64 {
        let (s, c) = libm::sincos(self.pitch_rad);
        c * p.y - s * p.z + s * self.height_m
    }

    pub fn project_to_image(&self, p: EgoPoint) -> Result<ImagePoint, GeometryError> {
        if !p.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        let (r, t) = self.rotation_translation();
        let cam = r * Vector3::new(p.x, p.y, p.z) + t;
        if cam.z <= DEPTH_EPS {
            return Err(GeometryError::PointBehindCamera { depth: cam.z });
        }
        let Intrinsics { fx, fy, cx, cy } = self.intrinsics;
        Ok(ImagePoint { u: fx * cam.x / cam.z + cx, v: fy * cam.y / cam.z + cy })
    }

    /// Maps an image point onto the flat ground through the inverse homography.
    pub fn image_to_ground(&self, p: ImagePoint) -> Result<TopViewPoint, GeometryError> {
        let h = self.homography_img_to_ground()?;
        let g = dehomogenize(&(h * Vector3::new(p.u, p.v, 1.0)))?;
        Ok(TopViewPoint { x_bar: g.0, y_bar: g.1 })
    }

    /// World ray direction (not normalized) through the given pixel position.
    pub fn pixel_ray(&self, p: ImagePoint) -> Vector3<f64> {
        let Intrinsics { fx, fy, cx, cy } = self.intrinsics;
        let (r, _) = self.rotation_translation();
        r.transpose() * Vector3::new((p.u - cx) / fx, (p.v - cy) / fy, 1.0)
    }

    /// Whether an image position lies on the sensor.
    pub fn contains(&self, p: ImagePoint) -> bool {
        let (w, h) = self.image_size;
        p.u >= 0.0 && p.v >= 0.0 && p.u < w as f64 && p.v < h as f64
    }
}

/// Converts homogeneous `(a, b, w)` into `(a/w, b/w)`.
pub fn dehomogenize(p: &Vector3<f64>) -> Result<(f64, f64), GeometryError> {
    if libm::fabs(p.z) < HOMOGENEOUS_EPS {
        return Err(GeometryError::PointAtInfinity);
    }
    Ok((p.x / p.z, p.y / p.z))
}

fn check_height(z: f64, cam_height: f64) -> Result<f64, GeometryError> {
    if !(cam_height.is_finite() && cam_height > 0.0) {
        return Err(GeometryError::InvalidHeight(cam_height));
    }
    if !z.is_finite() {
        return Err(GeometryError::NonFinite);
    }
    if z >= cam_height - HEIGHT_EPS {
        return Err(GeometryError::HeightAtCameraCenter { z, height: cam_height });
    }
    Ok(1.0 - z / cam_height)
}

/// Virtual top-view point at height `z` to the ego frame.
pub fn topview_to_ego(p: TopViewPoint, z: f64, cam_height: f64) -> Result<EgoPoint, GeometryError> {
    let scale = check_height(z, cam_height)?;
    Ok(EgoPoint { x: p.x_bar * scale, y: p.y_bar * scale, z })
}

/// Ego point to the virtual top-view; exact inverse of [`topview_to_ego`].
pub fn ego_to_topview(p: EgoPoint, cam_height: f64) -> Result<TopViewPoint, GeometryError> {
    check_height(p.z, cam_height)?;
    let gain = cam_height / (cam_height - p.z);
    Ok(TopViewPoint { x_bar: p.x * gain, y_bar: p.y * gain })
}

/// Regular metric grid on the flat ground. Row 0 is the far edge (`y_max`),
/// column 0 the left edge (`x_min`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopViewGrid {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    /// (cols, rows)
    pub resolution: (usize, usize),
}

impl Default for TopViewGrid {
    fn default() -> Self {
        Self { x_range: TOPVIEW_X_RANGE, y_range: TOPVIEW_Y_RANGE, resolution: TOPVIEW_RESOLUTION }
    }
}

impl TopViewGrid {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let ok = self.x_range.0 < self.x_range.1
            && self.y_range.0 < self.y_range.1
            && self.resolution.0 > 0
            && self.resolution.1 > 0;
        if ok { Ok(()) } else { Err(GeometryError::InvalidGrid) }
    }

    fn cell_size(&self) -> (f64, f64) {
        (
            (self.x_range.1 - self.x_range.0) / self.resolution.0 as f64,
            (self.y_range.1 - self.y_range.0) / self.resolution.1 as f64,
        )
    }

    pub fn cell_center(&self, col: usize, row: usize) -> TopViewPoint {
        let (dx, dy) = self.cell_size();
        TopViewPoint {
            x_bar: self.x_range.0 + (col as f64 + 0.5) * dx,
            y_bar: self.y_range.1 - (row as f64 + 0.5) * dy,
        }
    }

    /// Cell containing a ground point, if any.
    pub fn cell_of(&self, p: TopViewPoint) -> Option<(usize, usize)> {
        let (dx, dy) = self.cell_size();
        let col = libm::floor((p.x_bar - self.x_range.0) / dx);
        let row = libm::floor((self.y_range.1 - p.y_bar) / dy);
        let (cols, rows) = self.resolution;
        (col >= 0.0 && row >= 0.0 && col < cols as f64 && row < rows as f64).then(|| (col as usize, row as usize))
    }

    pub fn contains(&self, p: TopViewPoint) -> bool {
        p.x_bar >= self.x_range.0 && p.x_bar <= self.x_range.1 && p.y_bar >= self.y_range.0 && p.y_bar <= self.y_range.1
    }
}

/// Inverse perspective mapping of a categorical mask onto the top-view grid.
///
/// Each grid cell takes the value of the mask pixel hit by its center's ground
/// point (nearest neighbor); cells falling outside the image are 0.
pub fn warp_to_topview(cam: &CameraModel, mask: &Raster<u8>, grid: &TopViewGrid) -> Result<Raster<u8>, GeometryError> {
    grid.validate()?;
    let (w, h) = cam.image_size();
    let expected = (w as usize, h as usize);
    let got = (mask.width(), mask.height());
    if got != expected {
        return Err(GeometryError::MaskSizeMismatch { got, expected });
    }
    // rejects degenerate cameras before sampling
    cam.homography_img_to_ground()?;
    let fwd = cam.homography_ground_to_img();

    let (cols, rows) = grid.resolution;
    let mut out = Raster::filled(cols, rows, 0u8);
    for row in 0..rows {
        for col in 0..cols {
            let c = grid.cell_center(col, row);
            let q = fwd * Vector3::new(c.x_bar, c.y_bar, 1.0);
            if q.z <= DEPTH_EPS {
                continue;
            }
            let u = libm::floor(q.x / q.z);
            let v = libm::floor(q.y / q.z);
            if u >= 0.0 && v >= 0.0 && u < w as f64 && v < h as f64 {
                if let Some(val) = mask.get(u as usize, v as usize) {
                    out.set(col, row, val);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cam(h: f64, pitch: f64) -> CameraModel {
        CameraModel::new(h, pitch, Intrinsics { fx: 1000.0, fy: 1000.0, cx: 640.0, cy: 360.0 }, (1280, 720)).unwrap()
    }

    #[test]
    fn rotation_translation_level_camera() {
        let (r, t) = cam(1.5, 0.0).rotation_translation();
        assert_eq!(r, Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0));
        assert_eq!(t, Vector3::new(0.0, 1.5, 0.0));
    }

    #[test]
    fn rotation_translation_formula_entries() {
        let theta: f64 = 0.1;
        let (r, t) = cam(1.6, theta).rotation_translation();
        let (s, c) = (theta.sin(), theta.cos());
        let expected = [[1.0, 0.0, 0.0], [0.0, -s, -c], [0.0, c, -s]];
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(r[(i, j)], expected[i][j], epsilon = 1e-15);
            }
        }
        assert_abs_diff_eq!(t.y, c * 1.6, epsilon = 1e-15);
        assert_abs_diff_eq!(t.z, s * 1.6, epsilon = 1e-15);
    }

    #[test]
    fn straight_down_pitch_is_rejected() {
        let k = Intrinsics { fx: 1.0, fy: 1.0, cx: 0.0, cy: 0.0 };
        assert!(CameraModel::new(2.0, core::f64::consts::FRAC_PI_2, k, (10, 10)).is_err());
        assert!(CameraModel::new(2.0, -0.01, k, (10, 10)).is_err());
        assert!(CameraModel::new(0.0, 0.0, k, (10, 10)).is_err());
    }

    #[test]
    fn projection_on_optical_axis_hits_principal_point() {
        let c = cam(1.5, 0.0);
        for d in [0.5, 3.0, 250.0] {
            let p = c.project_to_image(EgoPoint::new(0.0, d, 1.5)).unwrap();
            assert_abs_diff_eq!(p.u, 640.0, epsilon = 1e-12);
            assert_abs_diff_eq!(p.v, 360.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn projection_hand_evaluated() {
        let c = CameraModel::new(1.5, 0.0, Intrinsics { fx: 1000.0, fy: 1000.0, cx: 0.0, cy: 0.0 }, (10, 10)).unwrap();
        let p = c.project_to_image(EgoPoint::new(1.0, 10.0, 1.5)).unwrap();
        assert_abs_diff_eq!(p.u, 100.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.v, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn projection_behind_camera_fails() {
        let c = cam(1.5, 0.0);
        assert!(matches!(
            c.project_to_image(EgoPoint::new(0.0, -2.0, 0.0)),
            Err(GeometryError::PointBehindCamera { .. })
        ));
        assert!(matches!(
            c.project_to_image(EgoPoint::new(0.0, 0.0, 1.5)),
            Err(GeometryError::PointBehindCamera { .. })
        ));
    }

    #[test]
    fn homography_round_trip() {
        let c = cam(1.7, 0.08);
        for &(x, y) in &[(0.0, 5.0), (-3.5, 20.0), (8.0, 90.0)] {
            let img = c.project_to_image(EgoPoint::new(x, y, 0.0)).unwrap();
            let g = c.image_to_ground(img).unwrap();
            assert_abs_diff_eq!(g.x_bar, x, epsilon = 1e-9);
            assert_abs_diff_eq!(g.y_bar, y, epsilon = 1e-9);
        }
    }

    #[test]
    fn tiny_height_homography_is_degenerate() {
        let c = CameraModel::new(1e-14, 0.05, Intrinsics { fx: 1000.0, fy: 1000.0, cx: 640.0, cy: 360.0 }, (1280, 720))
            .unwrap();
        assert!(matches!(c.homography_img_to_ground(), Err(GeometryError::DegenerateHomography { .. })));
    }

    #[test]
    fn topview_substitution_cases() {
        let p = topview_to_ego(TopViewPoint::new(4.0, 20.0), 0.0, 1.5).unwrap();
        assert_eq!(p, EgoPoint::new(4.0, 20.0, 0.0));
        let p = topview_to_ego(TopViewPoint::new(4.0, 20.0), 0.75, 1.5).unwrap();
        assert_eq!(p, EgoPoint::new(2.0, 10.0, 0.75));
        let t = ego_to_topview(EgoPoint::new(2.0, 10.0, 0.75), 1.5).unwrap();
        assert_eq!(t, TopViewPoint::new(4.0, 20.0));
        let t = ego_to_topview(EgoPoint::new(2.0, 10.0, -0.5), 1.5).unwrap();
        assert_abs_diff_eq!(t.x_bar, 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(t.y_bar, 7.5, epsilon = 1e-15);
    }

    #[test]
    fn height_at_camera_center_is_rejected() {
        assert!(matches!(
            topview_to_ego(TopViewPoint::new(1.0, 1.0), 1.5, 1.5),
            Err(GeometryError::HeightAtCameraCenter { .. })
        ));
        assert!(matches!(
            ego_to_topview(EgoPoint::new(1.0, 1.0, 1.5 - 1e-7), 1.5),
            Err(GeometryError::HeightAtCameraCenter { .. })
        ));
        assert!(matches!(
            ego_to_topview(EgoPoint::new(1.0, 1.0, 0.0), -1.0),
            Err(GeometryError::InvalidHeight(_))
        ));
    }

    #[test]
    fn grid_cells() {
        let g = TopViewGrid::default();
        assert_eq!(g.cell_of(TopViewPoint::new(-10.0, 101.0)), Some((0, 0)));
        assert_eq!(g.cell_of(TopViewPoint::new(9.999, 1.001)), Some((207, 107)));
        assert_eq!(g.cell_of(TopViewPoint::new(10.5, 50.0)), None);
        let c = g.cell_center(3, 4);
        assert_eq!(g.cell_of(c), Some((3, 4)));
    }

    #[test]
    fn warp_empty_mask_is_empty() {
        let c = cam(1.6, 0.05);
        let mask = Raster::filled(1280, 720, 0u8);
        let out = warp_to_topview(&c, &mask, &TopViewGrid::default()).unwrap();
        assert!(out.data().iter().all(|&v| v == 0));
    }

    #[test]
    fn warp_rejects_wrong_mask_size() {
        let c = cam(1.6, 0.05);
        let mask = Raster::filled(10, 10, 1u8);
        assert!(matches!(
            warp_to_topview(&c, &mask, &TopViewGrid::default()),
            Err(GeometryError::MaskSizeMismatch { .. })
        ));
    }
}
