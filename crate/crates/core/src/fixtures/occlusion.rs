use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{DepthKind, SceneFixture, SemanticClass};
use crate::geometry::EgoPoint;
use crate::lane::Lane3D;
use crate::raster::Raster;

/// Lane points farther than this from the camera center are truncated.
pub const BEYOND_RANGE_M: f64 = 200.0;
/// Default tolerance between a point's `y` and the depth map, meters.
pub const DEFAULT_OCCLUSION_EPS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OcclusionLabel {
    Visible,
    ForegroundOccluded,
    BackgroundOccluded,
    OutOfImage,
    BeyondRange,
}

impl OcclusionLabel {
    /// Whether finalized ground truth keeps the point.
    pub fn is_kept(self) -> bool {
        matches!(self, Self::Visible | Self::ForegroundOccluded)
    }
}

fn texel<T: Copy>(r: &Raster<T>, i: isize, j: isize) -> T {
    let i = i.clamp(0, r.width() as isize - 1) as usize;
    let j = j.clamp(0, r.height() as isize - 1) as usize;
    r.get(i, j).expect("clamped into bounds")
}

/// Surfaces seen around a sub-pixel image position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthSample {
    /// Bilinear depth over the four surrounding pixel centers; `+∞` if any of them is sky.
    pub interpolated: f64,
    /// Depth and semantic code of the four surrounding pixels.
    pub corners: [(f64, u8); 4],
    /// Bilinear weights of the corners.
    pub weights: [f64; 4],
}

impl DepthSample {
    /// Every finite depth that could describe the surface at the position.
    pub fn candidates(&self) -> impl Iterator<Item = f64> + '_ {
        core::iter::once(self.interpolated).chain(self.corners.iter().map(|c| c.0)).filter(|d| d.is_finite())
    }

}

/// Depth-map lookup at a sub-pixel image position; `None` outside the raster.
///
/// On a continuous surface the bilinear depth tracks the point even at range,
/// where one pixel spans meters of road. At silhouettes the corners carry
/// the surfaces on either side of the edge.

pub fn sample_depth(depth: &Raster<f32>, semantic: &Raster<u8>, u: f64, v: f64) -> Option<DepthSample> {
    let (w, h) = (depth.width() as f64, depth.height() as f64);
    if !(u >= 0.0 && v >= 0.0 && u < w && v < h) {
        return None;
    }
    let (gu, gv) = (u - 0.5, v - 0.5);
    let (i0, j0) = (libm::floor(gu), libm::floor(gv));
    let (fu, fv) = (gu - i0, gv - j0);
    let (i0, j0) = (i0 as isize, j0 as isize);
    let ij = [(i0, j0), (i0 + 1, j0), (i0, j0 + 1), (i0 + 1, j0 + 1)];
    let weights = [(1.0 - fu) * (1.0 - fv), fu * (1.0 - fv), (1.0 - fu) * fv, fu * fv];
    let corners = ij.map(|(i, j)| (texel(depth, i, j) as f64, texel(semantic, i, j)));
    let interpolated = if corners.iter().all(|c| c.0.is_finite()) {
        corners.iter().zip(weights).map(|(c, w)| c.0 * w).sum()
    } else {
        f64::INFINITY
    };
    Some(DepthSample { interpolated, corners, weights })
}

fn label_point(f: &SceneFixture, p: EgoPoint, eps: f64) -> OcclusionLabel {
    let (cam, depth, semantic) = (&f.camera, &f.depth_map, &f.semantic_map);
    let Ok(px) = cam.project_to_image(p) else {
        return OcclusionLabel::OutOfImage;
    };
    let Some(sample) = sample_depth(depth, semantic, px.u, px.v) else {
        return OcclusionLabel::OutOfImage;
    };
    let dz = p.z - cam.height_m();
    if libm::sqrt(p.x * p.x + p.y * p.y + dz * dz) > BEYOND_RANGE_M {
        return OcclusionLabel::BeyondRange;
    }
    let own = match f.depth_kind {
        DepthKind::EgoForward => p.y,
        DepthKind::CameraAxis => cam.depth_of(p),
    };
    if sample.interpolated.is_finite() && libm::fabs(own - sample.interpolated) <= eps {
        return OcclusionLabel::Visible;
    }
    // across a silhouette the interpolated depth is meaningless; let the
    // surrounding pixels vote by their bilinear weights instead
    let mut hidden_weight = 0.0;
    let mut occluder: Option<(f64, u8)> = None;
    for (&(d, class), w) in sample.corners.iter().zip(sample.weights) {
        if own - d > eps {
            hidden_weight += w;
            if occluder.is_none_or(|o: (f64, u8)| d < o.0) {
                occluder = Some((d, class));
            }
        }
    }
    match occluder {
        Some((_, class)) if hidden_weight > 0.5 => {
            if class == SemanticClass::Vehicle as u8 {
                OcclusionLabel::ForegroundOccluded
            } else {
                OcclusionLabel::BackgroundOccluded
            }
        }
        _ => OcclusionLabel::Visible,
    }
}

/// One label per point of every ground-truth lane, in lane order.
///
/// Points are tested in order: outside the image (or behind the camera),
/// beyond [`BEYOND_RANGE_M`] from the camera center, then occlusion. A point
/// within `eps` of the interpolated depth is visible. Otherwise the four
/// surrounding pixels vote with their bilinear weights: the point is occluded
/// when more than half of the weight sees a surface over `eps` in front of it,
/// and the nearest such surface decides between foreground (vehicle) and
/// background.
pub fn label_occlusion(fixture: &SceneFixture, eps: f64) -> Vec<Vec<OcclusionLabel>> {
    fixture
        .lanes_gt
        .iter()
        .map(|lane| {
            lane.points()
                .iter()
                .map(|&p| label_point(fixture, p, eps))
                .collect()
        })
        .collect()
}

/// Keeps visible and foreground-occluded points as visible ground truth.
///
/// Discarded points before the first and after the last kept point are cut;
/// discarded points between kept ones stay in place with visibility off so the
/// lane stays one polyline. Lanes left with fewer than two visible points are
/// removed. Panics if `labels` is not aligned with `lanes`.
pub fn finalize_ground_truth(lanes: &[Lane3D], labels: &[Vec<OcclusionLabel>]) -> Vec<Lane3D> {
    assert_eq!(lanes.len(), labels.len(), "labels must align with lanes");
    let mut out = Vec::new();
    for (lane, lab) in lanes.iter().zip(labels) {
        assert_eq!(lane.len(), lab.len(), "labels must align with lane points");
        let Some(first) = lab.iter().position(|l| l.is_kept()) else { continue };
        let last = lab.iter().rposition(|l| l.is_kept()).unwrap_or(first);
        let visibility: Vec<bool> = lab[first..=last].iter().map(|l| l.is_kept()).collect();
        if visibility.iter().filter(|&&v| v).count() < 2 {
            continue;
        }
        let points = lane.points()[first..=last].to_vec();
        if let Ok(l) = Lane3D::new(lane.category(), points, visibility, lane.prob()) {
            out.push(l);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lane::LaneCategory;
    use OcclusionLabel::*;

    fn lane(n: usize) -> Lane3D {
        let pts = (0..n).map(|i| EgoPoint::new(0.0, 10.0 + i as f64, 0.0)).collect();
        Lane3D::fully_visible(LaneCategory::Laneline, pts).unwrap()
    }

    #[test]
    fn all_visible_lane_unchanged() {
        let l = lane(5);
        let out = finalize_ground_truth(&[l.clone()], &[alloc::vec![Visible; 5]]);
        assert_eq!(out, alloc::vec![l]);
    }

    #[test]
    fn background_tail_truncated_foreground_kept() {
        let l = lane(6);
        let labels = alloc::vec![OutOfImage, Visible, ForegroundOccluded, Visible, BackgroundOccluded, BeyondRange];
        let out = finalize_ground_truth(&[l.clone()], &[labels]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].points(), &l.points()[1..4]);
        assert_eq!(out[0].visibility(), &[true, true, true]);
    }

    #[test]
    fn interior_gap_kept_invisible() {
        let l = lane(5);
        let labels = alloc::vec![Visible, BackgroundOccluded, BackgroundOccluded, Visible, Visible];
        let out = finalize_ground_truth(&[l], &[labels]);
        assert_eq!(out[0].visibility(), &[true, false, false, true, true]);
    }

    #[test]
    fn lane_without_two_kept_points_removed() {
        let out = finalize_ground_truth(&[lane(3)], &[alloc::vec![BeyondRange; 3]]);
        assert!(out.is_empty());
        let out = finalize_ground_truth(&[lane(3)], &[alloc::vec![OutOfImage, Visible, BeyondRange]]);
        assert!(out.is_empty());
    }

    #[test]
    fn bilinear_depth_and_candidates() {
        let depth = Raster::from_vec(2, 1, alloc::vec![10.0f32, 20.0]).unwrap();
        let sem = Raster::from_vec(2, 1, alloc::vec![3u8, 1]).unwrap();
        let s = sample_depth(&depth, &sem, 1.0, 0.5).unwrap();
        assert_eq!(s.interpolated, 15.0);
        assert_eq!(sample_depth(&depth, &sem, 0.25, 0.5).unwrap().interpolated, 10.0);
        assert!(sample_depth(&depth, &sem, 2.0, 0.5).is_none());
        let sky = Raster::from_vec(2, 1, alloc::vec![10.0f32, f32::INFINITY]).unwrap();
        let s = sample_depth(&sky, &sem, 1.2, 0.5).unwrap();
        assert_eq!(s.interpolated, f64::INFINITY);
        assert_eq!(s.candidates().collect::<Vec<_>>(), alloc::vec![10.0, 10.0]);
    }

    fn fixture_1x2(depths: [f32; 2], classes: [u8; 2]) -> SceneFixture {
        use crate::geometry::Intrinsics;
        // 1 px wide, 2 px tall image looking straight ahead at 1 m height
        let k = Intrinsics { fx: 1.0, fy: 1.0, cx: 0.5, cy: 1.0 };
        let camera = crate::geometry::CameraModel::new(1.0, 0.0, k, (1, 2)).unwrap();
        let lane = Lane3D::fully_visible(
            LaneCategory::Laneline,
            alloc::vec![EgoPoint::new(0.0, 10.0, 1.0), EgoPoint::new(0.0, 20.0, 0.0)],
        )
        .unwrap();
        SceneFixture {
            camera,
            lanes_gt: alloc::vec![lane],
            depth_map: Raster::from_vec(1, 2, depths.to_vec()).unwrap(),
            depth_kind: DepthKind::EgoForward,
            semantic_map: Raster::from_vec(1, 2, classes.to_vec()).unwrap(),
            occluders: Vec::new(),
        }
    }

    #[test]
    fn corner_vote_decides_at_silhouettes() {
        // (0,10,1) projects to v = 1.0, halfway between the rows; (0,20,0) to v = 1.05
        let f = fixture_1x2([5.0, 30.0], [SemanticClass::Vehicle as u8, SemanticClass::Road as u8]);
        let labels = label_occlusion(&f, 0.5);
        assert_eq!(labels[0], alloc::vec![Visible, Visible]);
        // the first point is hidden by exactly half the weight, which is not a majority
        let f = fixture_1x2([5.0, 12.0], [SemanticClass::Vehicle as u8, SemanticClass::Terrain as u8]);
        let labels = label_occlusion(&f, 0.5);
        assert_eq!(labels[0], alloc::vec![Visible, ForegroundOccluded]);
        // the nearest occluding surface picks the type
        let f = fixture_1x2([5.0, 12.0], [SemanticClass::Terrain as u8, SemanticClass::Vehicle as u8]);
        assert_eq!(label_occlusion(&f, 0.5)[0], alloc::vec![Visible, BackgroundOccluded]);
    }
}
