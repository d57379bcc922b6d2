//! Synthetic scene construction.
//!
//! Scenes are described on the ground plane (a label per ground point,
//! cylindrical poles, shadowed polygons, an optional back wall) and then
//! rendered through the pinhole camera into the label, depth, shadow and
//! background rasters that real scenes would supply. The bundled scenarios
//! and most tests are built this way.

use std::f64::consts::FRAC_PI_2;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::GroundFrame;
use crate::polygon::{self, Point2};
use crate::raster::{Raster, Rgb8Image};
use crate::scene::{
    CameraIntrinsics, Crosswalk, DepthRaster, GroundPlane, Label, Lane, LightCycle, Lighting, LightingMode,
    SceneDescription, SemanticRaster, StopLine, DEFAULT_DRIVABLE_THRESHOLD,
};

/// Vertical cylinder standing on the ground.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pole {
    pub position: Point2,
    pub radius: f64,
    pub height: f64,
}

/// Vertical wall parallel to the image plane at depth `depth_m`, reaching
/// `top_m` above the ground.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wall {
    pub depth_m: f64,
    pub top_m: f64,
}

fn camera_ray(frame: &GroundFrame, x: f64, y: f64) -> Vector3<f64> {
    Vector3::new(x, y, frame.focal_length_px)
}

/// Labels every pixel whose ray meets the ground in front of the camera with
/// `layout(ground point)`; other pixels are `Other` (sky).
pub fn paint_labels(
    intrinsics: &CameraIntrinsics,
    plane: &GroundPlane,
    _poles: &[Pole],
    layout: impl Fn(&Point2) -> Label,
) -> SemanticRaster {
    let frame = GroundFrame::new(*plane, intrinsics);
    Raster::from_fn(intrinsics.width_px, intrinsics.height_px, |col, row| {
        let (x, y) = intrinsics.pixel_center(col, row);
        match frame.pixel_to_ground(x, y) {
            Ok(p) => layout(&p),
            Err(_) => Label::Other,
        }
    })
}

/// First hit of a pixel ray on a pole: the depth `Z` of the hit.
fn pole_hit(frame: &GroundFrame, x: f64, y: f64, pole: &Pole) -> Option<f64> {
    let ray = camera_ray(frame, x, y);
    let origin = frame.from_camera(&Vector3::zeros());
    let d_ground = Vector3::new(ray.dot(&frame.right()), ray.dot(&frame.forward()), ray.dot(&frame.up()));
    let dxy = Point2::new(d_ground.x, d_ground.y);
    let oc = origin.0 - pole.position;
    let a = dxy.norm_squared();
    if a < 1e-18 {
        return None;
    }
    let b = 2.0 * dxy.dot(&oc);
    let c = oc.norm_squared() - pole.radius * pole.radius;
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let t = (-b - disc.sqrt()) / (2.0 * a);
    if t <= 0.0 {
        return None;
    }
    let z = origin.1 + t * d_ground.z;
    (0.0..=pole.height).contains(&z).then(|| t * ray.z)
}

/// Overwrites pole pixels with `Obstacle`.
pub fn paint_poles(labels: &mut SemanticRaster, intrinsics: &CameraIntrinsics, plane: &GroundPlane, poles: &[Pole]) {
    let frame = GroundFrame::new(*plane, intrinsics);
    for row in 0..intrinsics.height_px {
        for col in 0..intrinsics.width_px {
            let (x, y) = intrinsics.pixel_center(col, row);
            let ground = frame.plane_depth(x, y).unwrap_or(f64::INFINITY);
            if poles.iter().filter_map(|p| pole_hit(&frame, x, y, p)).any(|z| z < ground) {
                labels.set(col, row, Label::Obstacle);
            }
        }
    }
}

/// Full description of a synthetic scene.
pub struct SceneRecipe {
    pub intrinsics: CameraIntrinsics,
    pub plane: GroundPlane,
    pub layout: Box<dyn Fn(&Point2) -> Label + Send + Sync>,
    pub poles: Vec<Pole>,
    /// Ground regions already in shadow in the photo.
    pub shadows: Vec<Vec<Point2>>,
    pub shadow_tint: [f64; 3],
    pub wall: Option<Wall>,
    pub lighting: Lighting,
    pub lanes: Vec<Lane>,
    pub crosswalks: Vec<Crosswalk>,
    pub seed: u64,
}

fn base_color(label: Label, p: Option<&Point2>) -> [f64; 3] {
    match label {
        Label::Sidewalk => [172.0, 166.0, 156.0],
        Label::Road => [72.0, 72.0, 78.0],
        Label::Crosswalk => {
            // zebra stripes along x
            let stripe = p.map(|p| (p.x / 0.5).floor() as i64 % 2 == 0).unwrap_or(true);
            if stripe {
                [220.0, 220.0, 215.0]
            } else {
                [72.0, 72.0, 78.0]
            }
        }
        Label::Obstacle => [58.0, 60.0, 64.0],
        Label::Wall => [182.0, 142.0, 112.0],
        Label::Other => match p {
            Some(_) => [92.0, 122.0, 70.0],
            None => [150.0, 182.0, 222.0],
        },
    }
}

impl SceneRecipe {
    pub fn build(&self) -> SceneDescription {
        let cam = self.intrinsics;
        let frame = GroundFrame::new(self.plane, &cam);
        let (w, h) = (cam.width_px, cam.height_px);
        let mut labels = Raster::filled(w, h, Label::Other);
        let mut depth: DepthRaster = Raster::filled(w, h, f32::INFINITY);
        let mut shadow = Raster::filled(w, h, false);
        let mut background: Rgb8Image = Raster::filled(w, h, [0u8; 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);

        for row in 0..h {
            for col in 0..w {
                let (x, y) = cam.pixel_center(col, row);
                let ground_z = frame.plane_depth(x, y).ok();
                let mut z = ground_z.unwrap_or(f64::INFINITY);
                let mut label = Label::Other;
                let mut ground_point = None;
                if let Some(gz) = ground_z {
                    let p = frame.pixel_to_ground(x, y).expect("plane depth exists");
                    label = (self.layout)(&p);
                    z = gz;
                    ground_point = Some(p);
                }
                if let Some(wall) = self.wall {
                    // wall point along this ray at Z = depth
                    let q = Vector3::new(
                        x * wall.depth_m / cam.focal_length_px,
                        y * wall.depth_m / cam.focal_length_px,
                        wall.depth_m,
                    );
                    let height = frame.from_camera(&q).1;
                    if wall.depth_m < z && (0.0..=wall.top_m).contains(&height) {
                        z = wall.depth_m;
                        label = Label::Wall;
                        ground_point = None;
                    }
                }
                if let Some(pz) = self.poles.iter().filter_map(|p| pole_hit(&frame, x, y, p)).reduce(f64::min) {
                    if pz < z {
                        z = pz;
                        label = Label::Obstacle;
                        ground_point = None;
                    }
                }
                labels.set(col, row, label);
                depth.set(col, row, z as f32);
                let in_shadow =
                    ground_point.map(|p| self.shadows.iter().any(|poly| polygon::contains(poly, &p))).unwrap_or(false);
                shadow.set(col, row, in_shadow && label.is_ground());
                let anchor = ground_point.or(z.is_finite().then(Point2::zeros));
                let mut c = base_color(label, anchor.as_ref());
                if in_shadow {
                    for (ck, tk) in c.iter_mut().zip(self.shadow_tint) {
                        *ck *= tk;
                    }
                }
                let noise: f64 = rng.gen_range(-4.0..4.0);
                background.set(col, row, c.map(|v| (v + noise).round().clamp(0.0, 255.0) as u8));
            }
        }
        SceneDescription {
            intrinsics: cam,
            labels,
            depth,
            lighting: self.lighting,
            shadow_mask: shadow,
            lanes: self.lanes.clone(),
            crosswalks: self.crosswalks.clone(),
            background,
            drivable_threshold: DEFAULT_DRIVABLE_THRESHOLD,
            wall_depth_m: self.wall.map(|w| w.depth_m),
        }
    }
}

pub fn default_camera() -> CameraIntrinsics {
    CameraIntrinsics { focal_length_px: 300.0, width_px: 320, height_px: 240 }
}

/// Camera 1.6 m above the ground, pitched slightly downward.
pub fn default_plane() -> GroundPlane {
    GroundPlane::new(0.0, 1.0 / 1.6, 0.03)
}

fn sunny(azimuth: f64, elevation: f64) -> Lighting {
    Lighting {
        mode: LightingMode::Directional,
        sun_azimuth: azimuth,
        sun_elevation: elevation,
        directional_intensity: 0.75,
        ambient_intensity: 0.35,
    }
}

fn overcast() -> Lighting {
    Lighting {
        mode: LightingMode::Diffuse,
        sun_azimuth: 0.0,
        sun_elevation: FRAC_PI_2,
        directional_intensity: 0.3,
        ambient_intensity: 0.7,
    }
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Point2> {
    vec![Point2::new(x0, y0), Point2::new(x1, y0), Point2::new(x1, y1), Point2::new(x0, y1)]
}

fn recipe(layout: impl Fn(&Point2) -> Label + Send + Sync + 'static, lighting: Lighting, seed: u64) -> SceneRecipe {
    SceneRecipe {
        intrinsics: default_camera(),
        plane: default_plane(),
        layout: Box::new(layout),
        poles: vec![],
        shadows: vec![],
        shadow_tint: [0.45, 0.48, 0.6],
        wall: None,
        lighting,
        lanes: vec![],
        crosswalks: vec![],
        seed,
    }
}

/// A 3 m wide sidewalk crossing the view left to right, under overcast sky.
pub fn corridor() -> SceneRecipe {
    recipe(|p| if (7.0..10.0).contains(&p.y) { Label::Sidewalk } else { Label::Other }, overcast(), 1)
}

/// Open square with poles and a building shadow, low afternoon sun.
pub fn plaza() -> SceneRecipe {
    let mut r = recipe(
        |p| if (-9.0..9.0).contains(&p.x) && (4.0..18.0).contains(&p.y) { Label::Sidewalk } else { Label::Other },
        sunny(2.3, 0.75),
        2,
    );
    r.poles = [(-2.0, 9.0), (2.5, 12.0), (0.5, 7.0), (-3.5, 14.0)]
        .iter()
        .map(|&(x, y)| Pole { position: Point2::new(x, y), radius: 0.12, height: 3.0 })
        .collect();
    r.shadows = vec![rect(-9.0, 13.0, -1.0, 18.0)];
    r
}

/// Two-lane street with sidewalks on both sides and a signalized crosswalk.
pub fn crosswalk() -> SceneRecipe {
    let cw = rect(-3.5, 10.0, 3.5, 13.0);
    let mut r = recipe(
        |p| {
            let ax = p.x.abs();
            if ax < 3.5 {
                if (10.0..13.0).contains(&p.y) {
                    Label::Crosswalk
                } else {
                    Label::Road
                }
            } else if ax < 7.0 {
                Label::Sidewalk
            } else {
                Label::Other
            }
        },
        sunny(1.2, 0.9),
        3,
    );
    r.lanes = vec![
        Lane::new(vec![Point2::new(1.75, 0.0), Point2::new(1.75, 30.0)], 3.5),
        Lane::new(vec![Point2::new(-1.75, 30.0), Point2::new(-1.75, 0.0)], 3.5),
    ];
    r.crosswalks = vec![Crosswalk {
        polygon: cw,
        stop_lines: vec![StopLine { lane: 0, arc: 8.5 }, StopLine { lane: 1, arc: 15.5 }],
        schedule: Some(LightCycle { green_for_cars_s: 12.0, green_for_peds_s: 12.0, offset_s: 0.0 }),
    }];
    r.poles = vec![Pole { position: Point2::new(5.5, 15.0), radius: 0.12, height: 3.5 }];
    r
}

/// L-shaped sidewalk around a corner with a bollard, morning sun.
pub fn corner() -> SceneRecipe {
    let mut r = recipe(
        |p| {
            let leg_a = (-6.0..-3.0).contains(&p.x) && (5.0..20.0).contains(&p.y);
            let leg_b = (-6.0..8.0).contains(&p.x) && (5.0..8.0).contains(&p.y);
            if leg_a || leg_b {
                Label::Sidewalk
            } else {
                Label::Other
            }
        },
        sunny(0.6, 1.0),
        4,
    );
    r.poles = vec![Pole { position: Point2::new(-4.5, 10.0), radius: 0.15, height: 1.2 }];
    r
}

/// Courtyard in front of a building wall that casts a large shadow.
pub fn courtyard() -> SceneRecipe {
    let mut r = recipe(
        |p| if (-10.0..10.0).contains(&p.x) && (3.0..16.0).contains(&p.y) { Label::Sidewalk } else { Label::Other },
        sunny(1.9, 0.6),
        5,
    );
    r.wall = Some(Wall { depth_m: 18.0, top_m: 8.0 });
    r.shadows = vec![rect(-10.0, 11.0, 10.0, 16.0), rect(3.0, 3.0, 6.0, 7.0)];
    r.poles = vec![Pole { position: Point2::new(-1.0, 8.0), radius: 0.2, height: 2.5 }];
    r
}

/// Name and recipe of every bundled scenario.
pub fn bundled() -> Vec<(&'static str, SceneRecipe)> {
    vec![
        ("corridor", corridor()),
        ("plaza", plaza()),
        ("crosswalk", crosswalk()),
        ("corner", corner()),
        ("courtyard", courtyard()),
    ]
}
