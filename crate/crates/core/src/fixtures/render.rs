use alloc::vec;
use alloc::vec::Vec;

use super::{BoxOccluder, DepthKind, RoadSpec, SemanticClass};
use crate::geometry::{CameraModel, EgoPoint};
use crate::raster::Raster;

/// The rendered road continues this far past the last lane sample, so the
/// end of the lanes is not a silhouette against the sky.
pub(super) const ROAD_RUNOUT_M: f64 = 100.0;

/// Vertices closer than this to the camera plane drop their triangle.
const NEAR_PLANE: f64 = 1e-3;

#[derive(Debug, Clone, Copy)]
pub(super) struct Triangle {
    pub v: [EgoPoint; 3],
    pub class: SemanticClass,
}

fn quad(out: &mut Vec<Triangle>, a: EgoPoint, b: EgoPoint, c: EgoPoint, d: EgoPoint, class: SemanticClass) {
    out.push(Triangle { v: [a, b, c], class });
    out.push(Triangle { v: [a, c, d], class });
}

/// Road surface and terrain skirts, one strip per meter plus every height knot.
/// Strips are planar since the height is linear in `y` between knots.
pub(super) fn road_mesh(spec: &RoadSpec, (left, right): (f64, f64)) -> Vec<Triangle> {
    let (y0, y1) = (spec.y_span.0, spec.y_span.1 + ROAD_RUNOUT_M);
    let n = libm::floor(y1 - y0) as usize;
    let mut ys: Vec<f64> = (0..=n).map(|i| y0 + i as f64).collect();
    ys.push(y1);
    ys.extend(spec.height_profile.iter().map(|k| k.0).filter(|&y| y > y0 && y < y1));
    ys.sort_by(f64::total_cmp);
    ys.dedup();

    let mut cols = vec![(left, SemanticClass::Road), (right, SemanticClass::Terrain)];
    if spec.terrain_width > 0.0 {
        cols.insert(0, (left - spec.terrain_width, SemanticClass::Terrain));
        cols.push((right + spec.terrain_width, SemanticClass::Terrain));
    }

    let mut tris = Vec::with_capacity(ys.len() * 6);
    for w in ys.windows(2) {
        let (ya, yb) = (w[0], w[1]);
        let (ca, cb) = (spec.center_x(ya), spec.center_x(yb));
        let (za, zb) = (spec.height(ya), spec.height(yb));
        for k in 0..cols.len() - 1 {
            let (oa, ob) = (cols[k].0, cols[k + 1].0);
            let class = cols[k].1;
            quad(
                &mut tris,
                EgoPoint::new(ca + oa, ya, za),
                EgoPoint::new(ca + ob, ya, za),
                EgoPoint::new(cb + ob, yb, zb),
                EgoPoint::new(cb + oa, yb, zb),
                class,
            );
        }
    }
    tris
}

pub(super) fn box_mesh(b: &BoxOccluder) -> Vec<Triangle> {
    let (lo, hi) = (b.min, b.max);
    let p = |x: bool, y: bool, z: bool| {
        EgoPoint::new(if x { hi.x } else { lo.x }, if y { hi.y } else { lo.y }, if z { hi.z } else { lo.z })
    };
    let c = SemanticClass::Vehicle;
    let mut t = Vec::with_capacity(12);
    quad(&mut t, p(false, false, false), p(true, false, false), p(true, false, true), p(false, false, true), c);
    quad(&mut t, p(false, true, false), p(true, true, false), p(true, true, true), p(false, true, true), c);
    quad(&mut t, p(false, false, false), p(false, true, false), p(false, true, true), p(false, false, true), c);
    quad(&mut t, p(true, false, false), p(true, true, false), p(true, true, true), p(true, false, true), c);
    quad(&mut t, p(false, false, true), p(true, false, true), p(true, true, true), p(false, true, true), c);
    quad(&mut t, p(false, false, false), p(true, false, false), p(true, true, false), p(false, true, false), c);
    t
}

#[inline]
fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

/// Z-buffers triangles at pixel centers. The z-test runs on camera depth; the
/// stored value is either that depth or the perspective-correct ego `y`.
pub(super) fn rasterize(cam: &CameraModel, tris: &[Triangle], kind: DepthKind) -> (Raster<f32>, Raster<u8>) {
    let (w, h) = cam.image_size();
    let (w, h) = (w as usize, h as usize);
    let p = cam.projection_matrix();
    let mut zbuf = Raster::filled(w, h, f64::INFINITY);
    let mut depth = Raster::filled(w, h, f32::INFINITY);
    let mut sem = Raster::filled(w, h, SemanticClass::Sky as u8);

    for tri in tris {
        let mut scr = [(0.0, 0.0); 3];
        let mut inv_w = [0.0; 3];
        let mut behind = false;
        for (k, v) in tri.v.iter().enumerate() {
            let q = p * nalgebra::Vector4::new(v.x, v.y, v.z, 1.0);
            if q.z <= NEAR_PLANE {
                behind = true;
                break;
            }
            scr[k] = (q.x / q.z, q.y / q.z);
            inv_w[k] = 1.0 / q.z;
        }
        if behind {
            continue;
        }
        let area = edge(scr[0], scr[1], scr[2]);
        if area == 0.0 || !area.is_finite() {
            continue;
        }
        let min_u = scr.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
        let max_u = scr.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
        let min_v = scr.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
        let max_v = scr.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
        // pixel (i, j) is sampled at (i + 0.5, j + 0.5)
        let i0 = libm::ceil(min_u - 0.5).max(0.0);
        let i1 = libm::floor(max_u - 0.5).min(w as f64 - 1.0);
        let j0 = libm::ceil(min_v - 0.5).max(0.0);
        let j1 = libm::floor(max_v - 0.5).min(h as f64 - 1.0);
        if i0 > i1 || j0 > j1 {
            continue;
        }
        let (i0, i1, j0, j1) = (i0 as usize, i1 as usize, j0 as usize, j1 as usize);
        let ys = [tri.v[0].y, tri.v[1].y, tri.v[2].y];
        for j in j0..=j1 {
            for i in i0..=i1 {
                let c = (i as f64 + 0.5, j as f64 + 0.5);
                let b0 = edge(scr[1], scr[2], c) / area;
                let b1 = edge(scr[2], scr[0], c) / area;
                let b2 = edge(scr[0], scr[1], c) / area;
                if b0 < 0.0 || b1 < 0.0 || b2 < 0.0 {
                    continue;
                }
                let iw = b0 * inv_w[0] + b1 * inv_w[1] + b2 * inv_w[2];
                let cam_depth = 1.0 / iw;
                let z = zbuf.get_mut(i, j);
                if cam_depth < *z {
                    *z = cam_depth;
                    let stored = match kind {
                        DepthKind::EgoForward => (b0 * ys[0] * inv_w[0] + b1 * ys[1] * inv_w[1] + b2 * ys[2] * inv_w[2]) / iw,
                        DepthKind::CameraAxis => cam_depth,
                    };
                    depth.set(i, j, stored as f32);
                    sem.set(i, j, tri.class as u8);
                }
            }
        }
    }
    (depth, sem)
}
