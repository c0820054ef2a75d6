//! Independent reference computations used by the integration tests.
//!
//! Nothing here calls into the library's geometry: cameras are rebuilt from
//! their axes, homographies are fitted from point correspondences, and
//! occlusion is decided by explicit ray casting.
#![allow(dead_code)]

use nalgebra::{SMatrix, SVector, Vector3};

/// Pitch-only camera described by its optical center and axes in the ego frame.
#[derive(Debug, Clone, Copy)]
pub struct OracleCamera {
    pub height: f64,
    pub pitch: f64,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub rows: f64,
}

impl OracleCamera {
    pub fn center(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, self.height)
    }

    /// Optical axis: forward, tilted down by the pitch.
    pub fn forward(&self) -> Vector3<f64> {
        Vector3::new(0.0, self.pitch.cos(), -self.pitch.sin())
    }

    pub fn right(&self) -> Vector3<f64> {
        Vector3::new(1.0, 0.0, 0.0)
    }

    /// Image rows grow downward.
    pub fn down(&self) -> Vector3<f64> {
        self.forward().cross(&self.right())
    }

    /// Pixel position of a world point, `None` behind the camera.
    pub fn project(&self, p: Vector3<f64>) -> Option<(f64, f64)> {
        let d = p - self.center();
        let depth = d.dot(&self.forward());
        if depth <= 1e-9 {
            return None;
        }
        Some((self.cx + self.fx * d.dot(&self.right()) / depth, self.cy + self.fy * d.dot(&self.down()) / depth))
    }

    pub fn in_image(&self, (u, v): (f64, f64)) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width && v < self.rows
    }

    /// Direction of the viewing ray through an image position.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        self.forward() + self.right() * ((u - self.cx) / self.fx) + self.down() * ((v - self.cy) / self.fy)
    }
}

/// Where the ray from the camera center through ground point `(x̄, ȳ, 0)` reaches height `z`.
pub fn ray_at_height(height: f64, x_bar: f64, y_bar: f64, z: f64) -> (f64, f64) {
    let c = Vector3::new(0.0, 0.0, height);
    let g = Vector3::new(x_bar, y_bar, 0.0);
    // solve c.z + t (g.z - c.z) = z for t
    let t = (z - c.z) / (g.z - c.z);
    let p = c + (g - c) * t;
    (p.x, p.y)
}

/// Where the ray from the camera center through `p` meets the ground plane.
pub fn ground_hit(height: f64, p: Vector3<f64>) -> (f64, f64) {
    let c = Vector3::new(0.0, 0.0, height);
    let t = c.z / (c.z - p.z);
    let g = c + (p - c) * t;
    (g.x, g.y)
}

/// Homography mapping four source points to four destinations (direct linear transform, `h33 = 1`).
pub fn dlt_homography(src: &[(f64, f64); 4], dst: &[(f64, f64); 4]) -> nalgebra::Matrix3<f64> {
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for k in 0..4 {
        let (x, y) = src[k];
        let (u, v) = dst[k];
        a.set_row(2 * k, &SMatrix::<f64, 1, 8>::from_row_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]));
        a.set_row(2 * k + 1, &SMatrix::<f64, 1, 8>::from_row_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]));
        b[2 * k] = u;
        b[2 * k + 1] = v;
    }
    let h = a.lu().solve(&b).expect("non-degenerate correspondences");
    nalgebra::Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0)
}

pub fn apply_homography(h: &nalgebra::Matrix3<f64>, (x, y): (f64, f64)) -> (f64, f64) {
    let q = h * Vector3::new(x, y, 1.0);
    (q.x / q.z, q.y / q.z)
}

/// Slab test; returns the entry parameter `t >= 0` of `origin + t·dir` into the box.
pub fn ray_box(origin: Vector3<f64>, dir: Vector3<f64>, lo: Vector3<f64>, hi: Vector3<f64>) -> Option<f64> {
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for k in 0..3 {
        if dir[k] == 0.0 {
            if origin[k] < lo[k] || origin[k] > hi[k] {
                return None;
            }
            continue;
        }
        let a = (lo[k] - origin[k]) / dir[k];
        let b = (hi[k] - origin[k]) / dir[k];
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    (t0 <= t1).then_some(t0)
}

/// Piecewise-linear height profile, flat beyond the end knots.
pub fn profile_height(knots: &[(f64, f64)], y: f64) -> f64 {
    if knots.is_empty() {
        return 0.0;
    }
    if y <= knots[0].0 {
        return knots[0].1;
    }
    for w in knots.windows(2) {
        if y <= w[1].0 {
            let s = (y - w[0].0) / (w[1].0 - w[0].0);
            return w[0].1 + s * (w[1].1 - w[0].1);
        }
    }
    knots[knots.len() - 1].1
}

/// Forward distance `y` at which the ray `center + t·dir` (`dir.y > 0`) first
/// dips below a laterally constant surface `z = height(y)`, searched over `(0, y_max]`.
pub fn first_surface_hit_ray(cam_height: f64, knots: &[(f64, f64)], dir: Vector3<f64>, y_max: f64) -> Option<f64> {
    let ray_z = |y: f64| cam_height + dir.z * y / dir.y;
    let gap = |y: f64| ray_z(y) - profile_height(knots, y);
    // the gap is linear between consecutive breakpoints
    let mut breaks = vec![1e-9];
    breaks.extend(knots.iter().map(|k| k.0).filter(|&y| y > 1e-9 && y < y_max));
    breaks.push(y_max);
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (ga, gb) = (gap(a), gap(b));
        if gb < -1e-9 && ga >= 0.0 {
            return Some(a + (b - a) * ga / (ga - gb));
        }
    }
    None
}

/// What the oracle decides for one lane point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleLabel {
    OutOfImage,
    Visible,
    Hidden,
}

/// Ray-cast labels for consecutive lane points. `hidden(dir, p)` tells whether
/// the viewing ray along `dir` meets a surface clearly in front of `p`.
/// Alongside each label comes a flag marking it resolution-limited: the label
/// flips between neighboring points, or under a one-pixel shift of the ray.
pub fn oracle_labels(
    o: &OracleCamera,
    points: &[Vector3<f64>],
    hidden: impl Fn(Vector3<f64>, Vector3<f64>) -> bool,
) -> Vec<(OracleLabel, bool)> {
    let label = |dir, p| if hidden(dir, p) { OracleLabel::Hidden } else { OracleLabel::Visible };
    let mut out: Vec<(OracleLabel, bool)> = points
        .iter()
        .map(|&p| {
            let Some((u, v)) = o.project(p).filter(|&px| o.in_image(px)) else {
                return (OracleLabel::OutOfImage, false);
            };
            let l = label(p - o.center(), p);
            let shifted = [(u + 1.0, v), (u - 1.0, v), (u, v + 1.0), (u, v - 1.0)];
            let edge = shifted.iter().any(|&(su, sv)| label(o.ray(su, sv), p) != l);
            (l, edge)
        })
        .collect();
    for i in 0..out.len() {
        let flips = (i > 0 && out[i - 1].0 != out[i].0) || (i + 1 < out.len() && out[i + 1].0 != out[i].0);
        out[i].1 |= flips;
    }
    out
}

/// Minimum total over every assignment of size `min(rows, cols)`, each total summed in row order.
pub fn brute_force_assignment(costs: &[f64], rows: usize, cols: usize) -> f64 {
    fn rec(costs: &[f64], rows: usize, cols: usize, r: usize, used: &mut Vec<bool>, skips: usize, acc: f64, best: &mut f64) {
        if r == rows {
            *best = best.min(acc);
            return;
        }
        // a row may stay unassigned only while there are more rows than columns
        if skips > 0 {
            rec(costs, rows, cols, r + 1, used, skips - 1, acc, best);
        }
        for c in 0..cols {
            if !used[c] {
                used[c] = true;
                rec(costs, rows, cols, r + 1, used, skips, acc + costs[r * cols + c], best);
                used[c] = false;
            }
        }
    }
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    let mut used = vec![false; cols];
    rec(costs, rows, cols, 0, &mut used, rows.saturating_sub(cols), 0.0, &mut best);
    best
}
