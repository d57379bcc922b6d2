//! Ground-plane fitting and the camera ↔ ground coordinate frames.
//!
//! With perspective projection `x = Xf/Z`, `y = Yf/Z`, every ground pixel with
//! depth `Z` gives one linear equation in the plane coefficients:
//!
//! ```text
//! (a/f)·x + (b/f)·y + c = 1/Z
//! ```
//!
//! The ground frame is a metric 2D frame on the plane. Its origin is the foot
//! of the camera, `+y` is the camera's optical axis projected onto the plane
//! ("forward") and `+x` points to the camera's right. Heights are measured
//! along the upward plane normal.

use nalgebra::{DMatrix, DVector, Vector3};

use super::GeometryError;
use crate::polygon::Point2;
use crate::scene::{CameraIntrinsics, GroundPlane, SceneDescription};

/// One depth observation at a center-relative pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneSample {
    pub x_px: f64,
    pub y_px: f64,
    pub depth_m: f64,
}

/// Linear least-squares fit of `aX + bY + cZ = 1`.
pub fn fit_ground_plane(samples: &[PlaneSample], intrinsics: &CameraIntrinsics) -> Result<GroundPlane, GeometryError> {
    if samples.len() < 3 {
        return Err(GeometryError::RankDeficient);
    }
    if let Some(s) = samples.iter().find(|s| !(s.depth_m.is_finite() && s.depth_m > 0.0)) {
        return Err(GeometryError::InvalidSample(format!("depth {} at ({}, {})", s.depth_m, s.x_px, s.y_px)));
    }
    let f = intrinsics.focal_length_px;
    let a = DMatrix::from_fn(samples.len(), 3, |r, c| match c {
        0 => samples[r].x_px / f,
        1 => samples[r].y_px / f,
        _ => 1.0,
    });
    let rhs = DVector::from_iterator(samples.len(), samples.iter().map(|s| 1.0 / s.depth_m));
    let svd = a.svd(true, true);
    let sv = &svd.singular_values;
    let (max, min) = (sv.max(), sv.min());
    if max.is_nan() || max <= 0.0 || min / max < 1e-10 {
        return Err(GeometryError::RankDeficient);
    }
    let sol = svd.solve(&rhs, 0.0).map_err(|_| GeometryError::RankDeficient)?;
    Ok(GroundPlane::new(sol[0], sol[1], sol[2]))
}

/// Sum of squared residuals of `samples` against `plane`.
pub fn plane_residual(samples: &[PlaneSample], intrinsics: &CameraIntrinsics, plane: &GroundPlane) -> f64 {
    let f = intrinsics.focal_length_px;
    samples
        .iter()
        .map(|s| {
            let r = plane.a / f * s.x_px + plane.b / f * s.y_px + plane.c - 1.0 / s.depth_m;
            r * r
        })
        .sum()
}

/// Ground-labeled pixels with finite depth.
pub fn ground_samples(scene: &SceneDescription) -> Vec<PlaneSample> {
    let mut out = Vec::new();
    for (col, row, label) in scene.labels.iter_xy() {
        let z = *scene.depth.get(col, row) as f64;
        if label.is_ground() && z.is_finite() && z > 0.0 {
            let (x, y) = scene.intrinsics.pixel_center(col, row);
            out.push(PlaneSample { x_px: x, y_px: y, depth_m: z });
        }
    }
    out
}

/// Fits the scene's ground plane and rejects near-vertical results.
pub fn reconstruct_plane(scene: &SceneDescription, max_tilt: f64) -> Result<GroundPlane, GeometryError> {
    let plane = fit_ground_plane(&ground_samples(scene), &scene.intrinsics)?;
    plane.validate(max_tilt).map_err(|e| GeometryError::InvalidPlane(e.to_string()))?;
    Ok(plane)
}

/// Precomputed camera/ground transforms for one plane and camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundFrame {
    pub plane: GroundPlane,
    pub focal_length_px: f64,
    /// Unit normal pointing from the camera toward the plane (downward).
    normal: Vector3<f64>,
    foot: Vector3<f64>,
    right: Vector3<f64>,
    forward: Vector3<f64>,
}

impl GroundFrame {
    pub fn new(plane: GroundPlane, intrinsics: &CameraIntrinsics) -> Self {
        let coeffs = plane.coefficients();
        let normal = coeffs.normalize();
        let height = 1.0 / coeffs.norm();
        let z = Vector3::z();
        let mut forward = z - normal * z.dot(&normal);
        if forward.norm() < 1e-9 {
            // camera looking straight down; any horizontal axis will do
            forward = Vector3::y() - normal * normal.y;
        }
        let forward = forward.normalize();
        let right = normal.cross(&forward);
        Self { plane, focal_length_px: intrinsics.focal_length_px, normal, foot: normal * height, right, forward }
    }

    pub fn camera_height(&self) -> f64 {
        self.foot.norm()
    }

    /// Unit up vector (ground frame `z`) in camera coordinates.
    pub fn up(&self) -> Vector3<f64> {
        -self.normal
    }

    pub fn right(&self) -> Vector3<f64> {
        self.right
    }

    pub fn forward(&self) -> Vector3<f64> {
        self.forward
    }

    /// Camera-space point at ground coordinates `p` and height `h` above the plane.
    #[inline]
    pub fn to_camera(&self, p: &Point2, h: f64) -> Vector3<f64> {
        self.foot + self.right * p.x + self.forward * p.y - self.normal * h
    }

    /// Ground coordinates and height of a camera-space point.
    #[inline]
    pub fn from_camera(&self, q: &Vector3<f64>) -> (Point2, f64) {
        let d = q - self.foot;
        (Point2::new(d.dot(&self.right), d.dot(&self.forward)), -d.dot(&self.normal))
    }

    /// Converts a ground-frame direction `(x, y, up)` to camera space.
    pub fn direction_to_camera(&self, d: &Vector3<f64>) -> Vector3<f64> {
        self.right * d.x + self.forward * d.y - self.normal * d.z
    }

    /// Center-relative pixel and depth `Z` of a camera-space point in front
    /// of the camera.
    #[inline]
    pub fn project(&self, q: &Vector3<f64>) -> Option<(f64, f64, f64)> {
        (q.z > 1e-9).then(|| (self.focal_length_px * q.x / q.z, self.focal_length_px * q.y / q.z, q.z))
    }

    /// `1/Z` of the plane along the ray through a center-relative pixel, or
    /// a non-positive value when the ray misses the plane in front.
    #[inline]
    pub fn inverse_depth(&self, x_px: f64, y_px: f64) -> f64 {
        let f = self.focal_length_px;
        self.plane.a / f * x_px + self.plane.b / f * y_px + self.plane.c
    }

    /// Depth `Z` at which the pixel ray meets the plane.
    pub fn plane_depth(&self, x_px: f64, y_px: f64) -> Result<f64, GeometryError> {
        let inv = self.inverse_depth(x_px, y_px);
        if inv <= 1e-12 {
            Err(GeometryError::Horizon)
        } else {
            Ok(1.0 / inv)
        }
    }

    /// Ray/plane intersection of a center-relative pixel, in ground coordinates.
    pub fn pixel_to_ground(&self, x_px: f64, y_px: f64) -> Result<Point2, GeometryError> {
        let z = self.plane_depth(x_px, y_px)?;
        let f = self.focal_length_px;
        let q = Vector3::new(x_px * z / f, y_px * z / f, z);
        Ok(self.from_camera(&q).0)
    }

    /// Center-relative pixel of a ground point.
    pub fn ground_to_pixel(&self, p: &Point2) -> Result<(f64, f64), GeometryError> {
        self.project(&self.to_camera(p, 0.0)).map(|(x, y, _)| (x, y)).ok_or(GeometryError::Horizon)
    }

    /// Horizontal distance from the camera foot.
    pub fn range(&self, p: &Point2) -> f64 {
        p.norm()
    }
}

/// Free-function form of [`GroundFrame::pixel_to_ground`].
pub fn pixel_to_ground(
    x_px: f64,
    y_px: f64,
    intrinsics: &CameraIntrinsics,
    plane: &GroundPlane,
) -> Result<Point2, GeometryError> {
    GroundFrame::new(*plane, intrinsics).pixel_to_ground(x_px, y_px)
}

pub fn ground_to_pixel(
    p: &Point2,
    intrinsics: &CameraIntrinsics,
    plane: &GroundPlane,
) -> Result<(f64, f64), GeometryError> {
    GroundFrame::new(*plane, intrinsics).ground_to_pixel(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics { focal_length_px: 300.0, width_px: 320, height_px: 240 }
    }

    fn synth(plane: &GroundPlane, pts: &[(f64, f64)]) -> Vec<PlaneSample> {
        let f = cam().focal_length_px;
        pts.iter()
            .map(|&(x, y)| PlaneSample {
                x_px: x,
                y_px: y,
                depth_m: 1.0 / (plane.a / f * x + plane.b / f * y + plane.c),
            })
            .collect()
    }

    #[test]
    fn recovers_exact_plane() {
        let truth = GroundPlane::new(0.0, 0.667, 0.001);
        let pts: Vec<_> =
            (0..50).map(|i| ((i as f64 * 37.0) % 300.0 - 150.0, 5.0 + (i as f64 * 13.0) % 110.0)).collect();
        let fit = fit_ground_plane(&synth(&truth, &pts), &cam()).unwrap();
        let err = (fit.coefficients() - truth.coefficients()).norm() / truth.coefficients().norm();
        assert!(err < 1e-9, "relative error {err}");
    }

    #[test]
    fn constant_depth_gives_pure_c() {
        let s: Vec<_> = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0), (-7.0, 3.0)]
            .iter()
            .map(|&(x, y)| PlaneSample { x_px: x, y_px: y, depth_m: 10.0 })
            .collect();
        let p = fit_ground_plane(&s, &cam()).unwrap();
        assert!(p.a.abs() < 1e-12 && p.b.abs() < 1e-12);
        assert!((p.c - 0.1).abs() < 1e-12);
    }

    #[test]
    fn collinear_samples_are_rank_deficient() {
        let s: Vec<_> = (0..3)
            .map(|i| PlaneSample { x_px: i as f64, y_px: 2.0 * i as f64 + 1.0, depth_m: 4.0 + i as f64 })
            .collect();
        assert!(matches!(fit_ground_plane(&s, &cam()), Err(GeometryError::RankDeficient)));
    }

    #[test]
    fn least_squares_beats_perturbations() {
        let truth = GroundPlane::new(0.01, 0.6, 0.02);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<_> = (0..200).map(|_| (rng.gen_range(-160.0..160.0), rng.gen_range(10.0..120.0))).collect();
        let mut s = synth(&truth, &pts);
        for p in &mut s {
            p.depth_m *= 1.0 + rng.gen_range(-0.05..0.05);
        }
        let fit = fit_ground_plane(&s, &cam()).unwrap();
        let best = plane_residual(&s, &cam(), &fit);
        for _ in 0..100 {
            let d = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * 1e-3;
            let q = GroundPlane::new(fit.a + d.x, fit.b + d.y, fit.c + d.z);
            assert!(plane_residual(&s, &cam(), &q) >= best);
        }
    }

    #[test]
    fn center_column_depth_matches_closed_form() {
        let plane = GroundPlane::new(0.0, 1.0 / 1.5, 0.0);
        let frame = GroundFrame::new(plane, &cam());
        for y in [1.0, 10.0, 60.5, 119.5] {
            let g = frame.pixel_to_ground(0.0, y).unwrap();
            let expected = 300.0 * 1.5 / y;
            assert!((g.y - expected).abs() < 1e-9 * expected, "{g:?} vs {expected}");
            assert!(g.x.abs() < 1e-12);
        }
        assert!((frame.camera_height() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn horizon_pixel_errors() {
        let plane = GroundPlane::new(0.0, 1.0 / 1.5, 0.0);
        assert!(matches!(pixel_to_ground(12.0, 0.0, &cam(), &plane), Err(GeometryError::Horizon)));
        assert!(matches!(pixel_to_ground(12.0, -5.0, &cam(), &plane), Err(GeometryError::Horizon)));
    }

    #[test]
    fn round_trip_random_pixels() {
        let plane = GroundPlane::new(0.02, 0.61, 0.03);
        let frame = GroundFrame::new(plane, &cam());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut n = 0;
        while n < 1000 {
            let (x, y) = (rng.gen_range(-160.0..160.0), rng.gen_range(-120.0..120.0));
            if frame.inverse_depth(x, y) < 1e-3 {
                continue;
            }
            let g = frame.pixel_to_ground(x, y).unwrap();
            let (x2, y2) = frame.ground_to_pixel(&g).unwrap();
            assert!((x - x2).abs() < 1e-6 && (y - y2).abs() < 1e-6);
            n += 1;
        }
    }

    #[test]
    fn frame_axes_are_orthonormal() {
        let frame = GroundFrame::new(GroundPlane::new(0.05, 0.5, 0.1), &cam());
        let (r, f, u) = (frame.right(), frame.forward(), frame.up());
        assert!((r.norm() - 1.0).abs() < 1e-12 && (f.norm() - 1.0).abs() < 1e-12);
        assert!(r.dot(&f).abs() < 1e-12 && r.dot(&u).abs() < 1e-12 && f.dot(&u).abs() < 1e-12);
        // points on the ground satisfy the plane equation
        let q = frame.to_camera(&Point2::new(1.3, 7.0), 0.0);
        assert!((frame.plane.coefficients().dot(&q) - 1.0).abs() < 1e-12);
        assert!(f.z > 0.0, "forward looks away from the camera");
    }
}
