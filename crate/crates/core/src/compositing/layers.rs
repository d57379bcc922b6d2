//! Proxy rasterization into the color and depth layers.

use nalgebra::Vector3;

use super::{AgentProxy, BACKGROUND_WHITE, DIFFUSE_SHADOW_MARGIN, GROUND_GRAY};
use crate::geometry::{is_shadowed, GroundFrame, ShadowOccluder};
use crate::raster::{Raster, Rgb, RgbImage};
use crate::scene::{CameraIntrinsics, Label, Lighting, LightingMode, SceneDescription};

const NEAR_Z: f64 = 0.05;

/// Pixels that can receive a synthesized shadow, with their surface point
/// in ground coordinates `(x, y, height)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Receivers {
    pub points: Raster<Option<Vector3<f64>>>,
}

impl Receivers {
    /// Every pixel whose ray meets the ground plane.
    pub fn plane(intrinsics: &CameraIntrinsics, frame: &GroundFrame) -> Self {
        let points = Raster::from_fn(intrinsics.width_px, intrinsics.height_px, |c, r| {
            let (x, y) = intrinsics.pixel_center(c, r);
            frame.pixel_to_ground(x, y).ok().map(|p| Vector3::new(p.x, p.y, 0.0))
        });
        Self { points }
    }

    /// Ground-labeled pixels on the plane, plus wall pixels when the scene
    /// has a wall plane.
    pub fn from_scene(scene: &SceneDescription, frame: &GroundFrame) -> Self {
        let cam = &scene.intrinsics;
        let f = cam.focal_length_px;
        let points = Raster::from_fn(cam.width_px, cam.height_px, |c, r| {
            let (x, y) = cam.pixel_center(c, r);
            match *scene.labels.get(c, r) {
                l if l.is_ground() => frame.pixel_to_ground(x, y).ok().map(|p| Vector3::new(p.x, p.y, 0.0)),
                Label::Wall => scene.wall_depth_m.map(|z| {
                    let (p, h) = frame.from_camera(&Vector3::new(x * z / f, y * z / f, z));
                    Vector3::new(p.x, p.y, h)
                }),
                _ => None,
            }
        });
        Self { points }
    }

    pub fn mask(&self) -> crate::raster::Mask {
        self.points.map(|p| p.is_some())
    }
}

/// Render with no proxies and no shadows: receivers gray, the rest white.
pub fn reference_layer(receivers: &Receivers) -> RgbImage {
    receivers.points.map(|p| if p.is_some() { [GROUND_GRAY; 3] } else { [BACKGROUND_WHITE; 3] })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layers {
    pub f_rgb: RgbImage,
    /// Camera depth `Z` of proxies, `+inf` elsewhere.
    pub f_depth: Raster<f32>,
    pub reference: RgbImage,
}

fn light_direction(lighting: &Lighting) -> Vector3<f64> {
    match lighting.mode {
        LightingMode::Directional => lighting.sun_direction(),
        LightingMode::Diffuse => Vector3::z(),
    }
}

pub fn rasterize_layers(
    proxies: &[AgentProxy],
    frame: &GroundFrame,
    intrinsics: &CameraIntrinsics,
    lighting: &Lighting,
    occluder: Option<&ShadowOccluder>,
    receivers: &Receivers,
) -> Layers {
    let (w, h) = (intrinsics.width_px, intrinsics.height_px);
    let reference = reference_layer(receivers);
    let mut f_rgb = reference.clone();
    let mut f_depth = Raster::filled(w, h, f32::INFINITY);
    let light = light_direction(lighting);

    match lighting.mode {
        LightingMode::Directional => cast_shadows(proxies, &light, receivers, &mut f_rgb),
        LightingMode::Diffuse => {
            // top-down contact shadow on the ground only
            for (i, pt) in receivers.points.data().iter().enumerate() {
                let Some(pt) = pt else { continue };
                let p = nalgebra::Vector2::new(pt.x, pt.y);
                if pt.z == 0.0 && proxies.iter().any(|a| a.footprint_contains(&p, DIFFUSE_SHADOW_MARGIN)) {
                    f_rgb.data_mut()[i] = [0.0; 3];
                }
            }
        }
    }

    for p in proxies {
        let in_shadow = occluder.is_some_and(|o| is_shadowed(&p.center, p.height, o, lighting));
        let fp = p.footprint();
        let top = fp.map(|c| frame.to_camera(&c, p.height));
        let bottom = fp.map(|c| frame.to_camera(&c, 0.0));
        let up = Vector3::z();
        let mut faces: Vec<([Vector3<f64>; 4], Vector3<f64>)> = vec![(top, up)];
        for k in 0..4 {
            let (a, b) = (fp[k], fp[(k + 1) % 4]);
            let mid = (a + b) / 2.0 - p.center;
            let n = mid.normalize();
            faces.push(([bottom[k], bottom[(k + 1) % 4], top[(k + 1) % 4], top[k]], Vector3::new(n.x, n.y, 0.0)));
        }
        for (quad, normal) in faces {
            let lambert = if in_shadow { 0.0 } else { normal.dot(&light).max(0.0) };
            let intensity =
                (lighting.ambient_intensity + lighting.directional_intensity * lambert).clamp(0.0, 1.0) as f32;
            let color: Rgb = p.albedo.map(|a| (a * intensity).clamp(0.0, 1.0));
            for tri in [[quad[0], quad[1], quad[2]], [quad[0], quad[2], quad[3]]] {
                raster_triangle(&tri, color, frame, intrinsics, &mut f_rgb, &mut f_depth);
            }
        }
    }
    Layers { f_rgb, f_depth, reference }
}

/// Blackens receivers whose ray toward the light meets a proxy.
fn cast_shadows(proxies: &[AgentProxy], light: &Vector3<f64>, receivers: &Receivers, f_rgb: &mut RgbImage) {
    // ground-level receivers only need the proxies whose shadow box covers them
    let reach = if light.z > 1e-9 { nalgebra::Vector2::new(light.x, light.y) / light.z } else { Default::default() };
    let bounds: Vec<_> = proxies
        .iter()
        .map(|p| {
            let mut lo = nalgebra::Vector2::repeat(f64::INFINITY);
            let mut hi = -lo;
            for c in p.footprint() {
                for q in [c, c - reach * p.height] {
                    lo = lo.inf(&q);
                    hi = hi.sup(&q);
                }
            }
            (lo, hi)
        })
        .collect();
    for (i, pt) in receivers.points.data().iter().enumerate() {
        let Some(pt) = pt else { continue };
        let hit = proxies.iter().zip(&bounds).any(|(p, (lo, hi))| {
            if pt.z == 0.0 && (pt.x < lo.x || pt.y < lo.y || pt.x > hi.x || pt.y > hi.y) {
                return false;
            }
            p.ray_hit(pt, light)
        });
        if hit {
            f_rgb.data_mut()[i] = [0.0; 3];
        }
    }
}

/// Fills pixels whose centers fall inside the projected triangle, keeping
/// the nearest depth. Depth is interpolated as `1/Z` in screen space.
fn raster_triangle(
    tri: &[Vector3<f64>; 3],
    color: Rgb,
    frame: &GroundFrame,
    cam: &CameraIntrinsics,
    rgb: &mut RgbImage,
    depth: &mut Raster<f32>,
) {
    if tri.iter().any(|v| v.z < NEAR_Z) {
        return;
    }
    let mut pts = [(0.0, 0.0, 0.0); 3];
    for (k, v) in tri.iter().enumerate() {
        let Some(p) = frame.project(v) else { return };
        pts[k] = p;
    }
    let edge =
        |a: (f64, f64, f64), b: (f64, f64, f64), x: f64, y: f64| (b.0 - a.0) * (y - a.1) - (b.1 - a.1) * (x - a.0);
    let area = edge(pts[0], pts[1], pts[2].0, pts[2].1);
    if area.abs() < 1e-12 {
        return;
    }
    let (w, h) = (cam.width_px as f64, cam.height_px as f64);
    let xs = pts.map(|p| p.0 + w / 2.0);
    let ys = pts.map(|p| p.1 + h / 2.0);
    let c0 = (xs.iter().copied().fold(f64::INFINITY, f64::min) - 0.5).floor().max(0.0);
    let c1 = (xs.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 0.5).ceil().min(w);
    let r0 = (ys.iter().copied().fold(f64::INFINITY, f64::min) - 0.5).floor().max(0.0);
    let r1 = (ys.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 0.5).ceil().min(h);
    if c0 >= c1 || r0 >= r1 {
        return;
    }
    for row in r0 as usize..r1 as usize {
        for col in c0 as usize..c1 as usize {
            let (x, y) = cam.pixel_center(col, row);
            let b0 = edge(pts[1], pts[2], x, y) / area;
            let b1 = edge(pts[2], pts[0], x, y) / area;
            let b2 = edge(pts[0], pts[1], x, y) / area;
            if b0 < 0.0 || b1 < 0.0 || b2 < 0.0 {
                continue;
            }
            let inv = b0 / pts[0].2 + b1 / pts[1].2 + b2 / pts[2].2;
            let z = (1.0 / inv) as f32;
            let d = depth.get_mut(col, row);
            if z < *d {
                *d = z;
                rgb.set(col, row, color);
            }
        }
    }
}
