//! Frame compositing: agent proxies are rasterized into a color layer and a
//! depth layer, turned into shadow and object masks, and blended over the
//! background with color-matched shadows and z-buffered occlusion.

mod blend;
mod layers;
mod video;

use thiserror::Error;

use crate::geometry::GeometryError;
use crate::polygon::Point2;
use crate::raster::{Mask, Raster, RasterError, Rgb, RgbImage};

pub use blend::{
    composite_final, composite_shadow, extract_masks, gaussian_blur, largest_square, refine_background_depth,
    shadow_color_factor, ShadowComposite,
};
pub use layers::{rasterize_layers, reference_layer, Layers, Receivers};
pub use video::{agent_tracks, proxies_at, render_video, write_frames, RenderParams, Renderer, Track};

pub const GROUND_GRAY: f32 = 0.5;
pub const BACKGROUND_WHITE: f32 = 1.0;
pub const DEFAULT_SHADOW_FACTOR: Rgb = [0.45, 0.45, 0.50];
pub const SHADOW_FACTOR_RANGE: (f32, f32) = (0.2, 0.95);
/// Side of the smallest square patch accepted for shadow color matching.
pub const PATCH_SIDE: usize = 15;
pub const BLUR_SIGMA_DIRECTIONAL: f64 = 1.5;
pub const BLUR_SIGMA_DIFFUSE: f64 = 6.0;
/// How far the top-down contact shadow reaches past the footprint under
/// diffuse light.
pub const DIFFUSE_SHADOW_MARGIN: f64 = 0.3;

#[derive(Debug, Error)]
pub enum CompositingError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("trace gap: {kind} {id} is missing at tick {tick}")]
    TraceGap { kind: &'static str, id: u64, tick: u64 },
    #[error("proxy height {height} m must stay below the occluder plane at {limit} m")]
    ProxyTooTall { height: f64, limit: f64 },
    #[error("trace references lane {0}, scene has {1}")]
    UnknownLane(usize, usize),
    #[error("frame output: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProxyKind {
    Pedestrian,
    Car,
}

/// Box stand-in for an agent, resting on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentProxy {
    pub kind: ProxyKind,
    /// Footprint center in ground coordinates.
    pub center: Point2,
    /// Unit heading; the box length runs along it.
    pub heading: Point2,
    pub width: f64,
    pub length: f64,
    pub height: f64,
    pub albedo: Rgb,
}

impl AgentProxy {
    pub const PEDESTRIAN_SIZE: (f64, f64, f64) = (0.5, 0.5, 1.8);
    pub const CAR_SIZE: (f64, f64, f64) = (1.8, 4.5, 1.5);

    pub fn pedestrian(center: Point2, heading: Point2, albedo: Rgb) -> Self {
        let (width, length, height) = Self::PEDESTRIAN_SIZE;
        Self { kind: ProxyKind::Pedestrian, center, heading: unit_or_y(heading), width, length, height, albedo }
    }

    /// Car whose front bumper sits at `front`.
    pub fn car(front: Point2, heading: Point2, albedo: Rgb) -> Self {
        let (width, length, height) = Self::CAR_SIZE;
        let heading = unit_or_y(heading);
        Self { kind: ProxyKind::Car, center: front - heading * (length / 2.0), heading, width, length, height, albedo }
    }

    /// Unit vector to the right of the heading.
    pub fn side(&self) -> Point2 {
        Point2::new(self.heading.y, -self.heading.x)
    }

    /// Footprint corners, counter-clockwise.
    pub fn footprint(&self) -> [Point2; 4] {
        let (u, v) = (self.heading * (self.length / 2.0), self.side() * (self.width / 2.0));
        let c = self.center;
        [c - u + v, c + u + v, c + u - v, c - u - v]
    }

    /// Whether ground point `p` lies within `margin` of the footprint
    /// rectangle (per axis).
    pub fn footprint_contains(&self, p: &Point2, margin: f64) -> bool {
        let rel = p - self.center;
        rel.dot(&self.heading).abs() <= self.length / 2.0 + margin
            && rel.dot(&self.side()).abs() <= self.width / 2.0 + margin
    }

    /// Whether the ground-frame ray `o + t d` (height as the third
    /// coordinate) enters the box for some `t > 0`.
    pub fn ray_hit(&self, o: &nalgebra::Vector3<f64>, d: &nalgebra::Vector3<f64>) -> bool {
        let rel = Point2::new(o.x, o.y) - self.center;
        let dh = Point2::new(d.x, d.y);
        let axes = [
            (rel.dot(&self.heading), dh.dot(&self.heading), self.length / 2.0),
            (rel.dot(&self.side()), dh.dot(&self.side()), self.width / 2.0),
            (o.z - self.height / 2.0, d.z, self.height / 2.0),
        ];
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for (p, v, half) in axes {
            if v.abs() < 1e-12 {
                if p.abs() > half {
                    return false;
                }
                continue;
            }
            let (t0, t1) = ((-half - p) / v, (half - p) / v);
            lo = lo.max(t0.min(t1));
            hi = hi.min(t0.max(t1));
        }
        hi >= lo.max(0.0) && hi > 1e-9
    }
}

fn unit_or_y(v: Point2) -> Point2 {
    let n = v.norm();
    if n > 1e-12 && n.is_finite() {
        v / n
    } else {
        Point2::new(0.0, 1.0)
    }
}

/// Every raster produced for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBuffers {
    pub f_rgb: RgbImage,
    pub f_depth: Raster<f32>,
    pub m_s: Mask,
    pub m_o: Mask,
    pub matte: Raster<f32>,
    pub f_ws: RgbImage,
    pub f_final: RgbImage,
}
