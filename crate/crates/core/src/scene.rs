//! Scene inputs: camera, rasters, lighting, lanes and crosswalks, plus the
//! scenario file format that bundles them.
//!
//! A scenario is a TOML file whose `[rasters]` table names sidecar files
//! relative to the scenario's directory. Label, depth and shadow rasters are
//! `SVR1`; the background may be PPM or 3-channel `SVR1`.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polygon::{self, Point2};
use crate::raster::{self, Mask, Raster, RasterError, Rgb8Image, SvrRaster};

pub const DEFAULT_DRIVABLE_THRESHOLD: f64 = 0.05;
/// Largest angle between the ground normal and the camera's vertical axis
/// accepted as "ground".
pub const DEFAULT_MAX_GROUND_TILT: f64 = 80.0 * std::f64::consts::PI / 180.0;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot decode raster {path}: {source}")]
    Raster { path: PathBuf, source: RasterError },
    #[error("malformed scenario file: {0}")]
    Parse(String),
    #[error("invalid {field}: {message}")]
    Invalid { field: String, message: String },
}

impl SceneError {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        SceneError::Invalid { field: field.into(), message: message.into() }
    }

    /// Whether the failure came from the filesystem rather than the content.
    pub fn is_io(&self) -> bool {
        match self {
            SceneError::Io { .. } => true,
            SceneError::Raster { source, .. } => matches!(source, RasterError::Io(_)),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub focal_length_px: f64,
    pub width_px: usize,
    pub height_px: usize,
}

impl CameraIntrinsics {
    /// Center-relative coordinates of the center of pixel `(col, row)`.
    /// `x` grows right and `y` grows down, like camera `X` and `Y`.
    #[inline]
    pub fn pixel_center(&self, col: usize, row: usize) -> (f64, f64) {
        (col as f64 + 0.5 - self.width_px as f64 / 2.0, row as f64 + 0.5 - self.height_px as f64 / 2.0)
    }

    /// Continuous image coordinates (column, row) of a center-relative point.
    #[inline]
    pub fn to_image(&self, x: f64, y: f64) -> (f64, f64) {
        (x + self.width_px as f64 / 2.0, y + self.height_px as f64 / 2.0)
    }

    /// Pixel containing a center-relative point, if inside the image.
    pub fn pixel_at(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let (c, r) = self.to_image(x, y);
        if c >= 0.0 && r >= 0.0 && c < self.width_px as f64 && r < self.height_px as f64 {
            Some((c as usize, r as usize))
        } else {
            None
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width_px * self.height_px
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if !(self.focal_length_px.is_finite() && self.focal_length_px > 0.0) {
            return Err(SceneError::invalid("focal_length_px", format!("must be > 0, got {}", self.focal_length_px)));
        }
        if self.width_px < 16 || self.height_px < 16 {
            return Err(SceneError::invalid(
                "width_px/height_px",
                format!("image must be at least 16x16, got {}x{}", self.width_px, self.height_px),
            ));
        }
        Ok(())
    }
}

/// Ground plane `aX + bY + cZ = 1` in camera coordinates (meters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundPlane {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl GroundPlane {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    pub fn coefficients(&self) -> nalgebra::Vector3<f64> {
        nalgebra::Vector3::new(self.a, self.b, self.c)
    }

    /// Distance from the camera center to the plane.
    pub fn camera_height(&self) -> f64 {
        1.0 / self.coefficients().norm()
    }

    /// Rejects a zero normal or one tilted more than `max_tilt` radians away
    /// from the camera's vertical (`Y`) axis.
    pub fn validate(&self, max_tilt: f64) -> Result<(), SceneError> {
        let n = self.coefficients();
        if !n.iter().all(|v| v.is_finite()) || n.norm() == 0.0 {
            return Err(SceneError::invalid("ground_plane", "coefficients must be finite and not all zero"));
        }
        let cos_tilt = n.y / n.norm();
        if cos_tilt < max_tilt.cos() {
            return Err(SceneError::invalid(
                "ground_plane",
                format!("normal tilted {:.1} deg from vertical", cos_tilt.clamp(-1.0, 1.0).acos().to_degrees()),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Label {
    Other = 0,
    Road = 1,
    Sidewalk = 2,
    Obstacle = 3,
    Crosswalk = 4,
    Wall = 5,
}

impl Label {
    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => Label::Other,
            1 => Label::Road,
            2 => Label::Sidewalk,
            3 => Label::Obstacle,
            4 => Label::Crosswalk,
            5 => Label::Wall,
            _ => return None,
        })
    }

    /// Road, sidewalk and crosswalk all lie on the ground plane.
    pub fn is_ground(self) -> bool {
        matches!(self, Label::Road | Label::Sidewalk | Label::Crosswalk)
    }
}

pub type SemanticRaster = Raster<Label>;
/// Meters along the optical axis; `+inf` for sky or unknown.
pub type DepthRaster = Raster<f32>;
pub type ShadowMaskRaster = Mask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LightingMode {
    Directional,
    Diffuse,
}

/// Sun angles are measured in the ground frame: azimuth counter-clockwise
/// from the ground `+x` (camera right) axis toward `+y` (forward), elevation
/// above the ground plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lighting {
    pub mode: LightingMode,
    pub sun_azimuth: f64,
    pub sun_elevation: f64,
    pub directional_intensity: f64,
    pub ambient_intensity: f64,
}

impl Lighting {
    /// Unit vector toward the sun in ground coordinates `(x, y, up)`.
    pub fn sun_direction(&self) -> nalgebra::Vector3<f64> {
        let (se, ce) = self.sun_elevation.sin_cos();
        let (sa, ca) = self.sun_azimuth.sin_cos();
        nalgebra::Vector3::new(ce * ca, ce * sa, se)
    }

    /// Horizontal ground displacement per meter of height when following a
    /// ray toward the sun.
    pub fn horizontal_offset_per_meter(&self) -> Point2 {
        let (se, ce) = self.sun_elevation.sin_cos();
        let (sa, ca) = self.sun_azimuth.sin_cos();
        Point2::new(ca, sa) * (ce / se)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if !(0.0..TAU).contains(&self.sun_azimuth) {
            return Err(SceneError::invalid("sun_azimuth", format!("must lie in [0, 2pi), got {}", self.sun_azimuth)));
        }
        if !(self.sun_elevation > 0.0 && self.sun_elevation <= FRAC_PI_2) {
            return Err(SceneError::invalid(
                "sun_elevation",
                format!("sun must be above the horizon, got {}", self.sun_elevation),
            ));
        }
        for (name, v) in
            [("directional_intensity", self.directional_intensity), ("ambient_intensity", self.ambient_intensity)]
        {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SceneError::invalid(name, format!("must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Straight-segment lane centerline with arc-length parameterization.
/// Arc length is signed: values below zero or past the end extrapolate along
/// the first or last segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Lane {
    pub centerline: Vec<Point2>,
    pub width_m: f64,
}

impl Lane {
    pub fn new(centerline: Vec<Point2>, width_m: f64) -> Self {
        Self { centerline, width_m }
    }

    fn cumulative(&self) -> Vec<f64> {
        let mut acc = vec![0.0];
        for w in self.centerline.windows(2) {
            acc.push(acc.last().unwrap() + (w[1] - w[0]).norm());
        }
        acc
    }

    pub fn length(&self) -> f64 {
        *self.cumulative().last().unwrap_or(&0.0)
    }

    fn segment_for(&self, s: f64) -> (usize, f64) {
        let cum = self.cumulative();
        let nseg = self.centerline.len() - 1;
        let mut k = 0;
        while k + 1 < nseg && s > cum[k + 1] {
            k += 1;
        }
        (k, s - cum[k])
    }

    pub fn direction_at(&self, s: f64) -> Point2 {
        let (k, _) = self.segment_for(s);
        (self.centerline[k + 1] - self.centerline[k]).normalize()
    }

    pub fn point_at(&self, s: f64) -> Point2 {
        let (k, local) = self.segment_for(s);
        self.centerline[k] + self.direction_at(s) * local
    }

    /// Arc length of the closest centerline point to `p`.
    pub fn project(&self, p: &Point2) -> f64 {
        let cum = self.cumulative();
        let mut best = (f64::INFINITY, 0.0);
        let nseg = self.centerline.len() - 1;
        for (k, seg) in self.centerline.windows(2).enumerate() {
            let (a, b) = (seg[0], seg[1]);
            let len = (b - a).norm();
            let dir = (b - a) / len;
            let mut t = (p - a).dot(&dir);
            if k > 0 {
                t = t.max(0.0);
            }
            if k + 1 < nseg {
                t = t.min(len);
            }
            let d = (a + dir * t - p).norm();
            if d < best.0 {
                best = (d, cum[k] + t);
            }
        }
        best.1
    }

    /// Arc interval over which the centerline lies inside a convex polygon.
    pub fn interval_inside(&self, poly: &[Point2]) -> Option<(f64, f64)> {
        let len = self.length();
        let step = 0.05;
        let n = (len / step).ceil() as usize;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..=n {
            let s = (i as f64 * step).min(len);
            if polygon::convex_contains(poly, &self.point_at(s), 1e-9) {
                lo = lo.min(s);
                hi = hi.max(s);
            }
        }
        (lo <= hi).then_some((lo, hi))
    }

    pub fn validate(&self, idx: usize) -> Result<(), SceneError> {
        let field = format!("lanes[{idx}]");
        if self.centerline.len() < 2 {
            return Err(SceneError::invalid(field, "centerline needs at least two points"));
        }
        if self.centerline.windows(2).any(|w| (w[1] - w[0]).norm() < 1e-9) {
            return Err(SceneError::invalid(field, "consecutive centerline points coincide"));
        }
        if !(self.width_m.is_finite() && self.width_m > 0.0) {
            return Err(SceneError::invalid(field, format!("width_m must be > 0, got {}", self.width_m)));
        }
        Ok(())
    }
}

/// Square-wave traffic light: cars have green for the first
/// `green_for_cars_s` of each period, pedestrians for the remainder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightCycle {
    pub green_for_cars_s: f64,
    pub green_for_peds_s: f64,
    #[serde(default)]
    pub offset_s: f64,
}

impl LightCycle {
    pub fn period(&self) -> f64 {
        self.green_for_cars_s + self.green_for_peds_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopLine {
    pub lane: usize,
    pub arc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Crosswalk {
    pub polygon: Vec<Point2>,
    pub stop_lines: Vec<StopLine>,
    /// `None` means the crosswalk has no light and cars always have green.
    pub schedule: Option<LightCycle>,
}

impl Crosswalk {
    pub fn stop_arc(&self, lane: usize) -> Option<f64> {
        self.stop_lines.iter().find(|s| s.lane == lane).map(|s| s.arc)
    }

    fn validate(&self, idx: usize, lanes: &[Lane]) -> Result<(), SceneError> {
        let field = format!("crosswalks[{idx}]");
        if self.polygon.len() < 3 || polygon::signed_area(&self.polygon).abs() < 1e-6 {
            return Err(SceneError::invalid(field, "polygon is degenerate"));
        }
        if !polygon::is_convex(&self.polygon) {
            return Err(SceneError::invalid(field, "polygon must be convex"));
        }
        for sl in &self.stop_lines {
            let lane = lanes
                .get(sl.lane)
                .ok_or_else(|| SceneError::invalid(&field, format!("stop line references missing lane {}", sl.lane)))?;
            match lane.interval_inside(&self.polygon) {
                Some((lo, _)) if sl.arc < lo => {}
                Some((lo, _)) => {
                    return Err(SceneError::invalid(
                        &field,
                        format!("stop_arc {} on lane {} must precede the crossing at {lo:.2}", sl.arc, sl.lane),
                    ))
                }
                None => {
                    return Err(SceneError::invalid(&field, format!("lane {} does not cross the polygon", sl.lane)))
                }
            }
        }
        if let Some(c) = &self.schedule {
            if !(c.green_for_cars_s > 0.0 && c.green_for_peds_s > 0.0) || !c.offset_s.is_finite() {
                return Err(SceneError::invalid(field, "light phase durations must be > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneDescription {
    pub intrinsics: CameraIntrinsics,
    pub labels: SemanticRaster,
    pub depth: DepthRaster,
    pub lighting: Lighting,
    pub shadow_mask: ShadowMaskRaster,
    pub lanes: Vec<Lane>,
    pub crosswalks: Vec<Crosswalk>,
    pub background: Rgb8Image,
    /// Road-pixel fraction below which the scene is pedestrian-only.
    pub drivable_threshold: f64,
    /// Depth of an optional vertical wall parallel to the image plane.
    pub wall_depth_m: Option<f64>,
}

/// One named validation outcome.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub outcome: Result<(), String>,
}

impl SceneDescription {
    fn typed_checks(&self) -> Vec<(String, Result<(), SceneError>)> {
        let mut out = Vec::new();
        out.push(("camera".to_string(), self.intrinsics.validate()));
        let (w, h) = (self.intrinsics.width_px, self.intrinsics.height_px);
        let dims = |name: &str, d: (usize, usize)| {
            if d == (w, h) {
                Ok(())
            } else {
                Err(SceneError::invalid(name, format!("raster is {}x{}, camera is {w}x{h}", d.0, d.1)))
            }
        };
        out.push(("labels raster".into(), dims("labels", self.labels.dims())));
        out.push(("depth raster".into(), dims("depth", self.depth.dims())));
        out.push(("shadow raster".into(), dims("shadow", self.shadow_mask.dims())));
        out.push(("background raster".into(), dims("background", self.background.dims())));
        let bad_depth = self.depth.data().iter().position(|&d| d.is_nan() || d <= 0.0);
        out.push((
            "depth values".into(),
            match bad_depth {
                None => Ok(()),
                Some(i) => {
                    let w = self.depth.width().max(1);
                    Err(SceneError::invalid(
                        "depth",
                        format!("pixel ({}, {}) has non-positive depth {}", i % w, i / w, self.depth.data()[i]),
                    ))
                }
            },
        ));
        out.push(("lighting".into(), self.lighting.validate()));
        out.push((
            "drivable_threshold".into(),
            if self.drivable_threshold > 0.0 && self.drivable_threshold < 1.0 {
                Ok(())
            } else {
                Err(SceneError::invalid(
                    "drivable_threshold",
                    format!("must lie in (0, 1), got {}", self.drivable_threshold),
                ))
            },
        ));
        out.push((
            "wall_depth_m".into(),
            match self.wall_depth_m {
                Some(d) if !(d.is_finite() && d > 0.0) => Err(SceneError::invalid("wall_depth_m", "must be > 0")),
                _ => Ok(()),
            },
        ));
        for (i, lane) in self.lanes.iter().enumerate() {
            out.push((format!("lane {i}"), lane.validate(i)));
        }
        for (i, cw) in self.crosswalks.iter().enumerate() {
            out.push((format!("crosswalk {i}"), cw.validate(i, &self.lanes)));
        }
        out
    }

    /// Every invariant check, in a fixed order.
    pub fn checks(&self) -> Vec<Check> {
        self.typed_checks().into_iter().map(|(name, r)| Check { name, outcome: r.map_err(|e| e.to_string()) }).collect()
    }

    /// Fails with the first violated invariant.
    pub fn validate(&self) -> Result<(), SceneError> {
        self.typed_checks().into_iter().map(|(_, r)| r).find(|r| r.is_err()).unwrap_or(Ok(()))
    }

    /// Clears shadow pixels that are not on ground labels.
    pub fn intersect_shadow_with_ground(&mut self) {
        let labels = &self.labels;
        for (i, s) in self.shadow_mask.data_mut().iter_mut().enumerate() {
            *s = *s && labels.data()[i].is_ground();
        }
    }

    pub fn ground_mask(&self) -> Mask {
        self.labels.map(|l| l.is_ground())
    }

    pub fn label_fraction(&self, label: Label) -> f64 {
        let n = self.labels.data().iter().filter(|&&l| l == label).count();
        n as f64 / self.labels.data().len().max(1) as f64
    }
}

// ---- scenario file ---------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    camera: CameraIntrinsics,
    lighting: LightingFile,
    rasters: RasterPaths,
    #[serde(default = "default_threshold")]
    drivable_threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    wall_depth_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    lanes: Vec<LaneFile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    crosswalks: Vec<CrosswalkFile>,
}

fn default_threshold() -> f64 {
    DEFAULT_DRIVABLE_THRESHOLD
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LightingFile {
    mode: LightingMode,
    #[serde(default)]
    sun_azimuth: f64,
    #[serde(default = "zenith")]
    sun_elevation: f64,
    #[serde(default)]
    directional_intensity: f64,
    #[serde(default = "default_ambient")]
    ambient_intensity: f64,
}

fn zenith() -> f64 {
    FRAC_PI_2
}

fn default_ambient() -> f64 {
    1.0
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RasterPaths {
    labels: String,
    depth: String,
    shadow: String,
    background: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LaneFile {
    width_m: f64,
    centerline: Vec<[f64; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CrosswalkFile {
    polygon: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    stop_lines: Vec<StopLine>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    schedule: Option<LightCycle>,
}

fn read_svr(path: &Path) -> Result<SvrRaster, SceneError> {
    let bytes = fs::read(path).map_err(|source| SceneError::Io { path: path.to_path_buf(), source })?;
    SvrRaster::decode(&bytes).map_err(|source| SceneError::Raster { path: path.to_path_buf(), source })
}

fn raster_err(path: &Path) -> impl Fn(RasterError) -> SceneError + '_ {
    move |source| SceneError::Raster { path: path.to_path_buf(), source }
}

/// Parses a scenario and its sidecars without checking invariants.
pub fn load_scene_unvalidated(path: &Path) -> Result<SceneDescription, SceneError> {
    let text = fs::read_to_string(path).map_err(|source| SceneError::Io { path: path.to_path_buf(), source })?;
    let file: ScenarioFile = toml::from_str(&text).map_err(|e| SceneError::Parse(e.to_string()))?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));

    let labels_path = dir.join(&file.rasters.labels);
    let raw = read_svr(&labels_path)?.into_u8().map_err(raster_err(&labels_path))?;
    if let Some(i) = raw.data().iter().position(|&v| Label::from_u8(v).is_none()) {
        return Err(SceneError::invalid("labels", format!("unknown label value {} at index {i}", raw.data()[i])));
    }
    let labels = raw.map(|&v| Label::from_u8(v).unwrap());

    let depth_path = dir.join(&file.rasters.depth);
    let depth = read_svr(&depth_path)?.into_f32().map_err(raster_err(&depth_path))?;

    let shadow_path = dir.join(&file.rasters.shadow);
    let shadow_mask = read_svr(&shadow_path)?.into_u8().map_err(raster_err(&shadow_path))?.map(|&v| v != 0);

    let bg_path = dir.join(&file.rasters.background);
    let background = raster::read_rgb(&bg_path).map_err(|source| match source {
        RasterError::Io(source) => SceneError::Io { path: bg_path.clone(), source },
        source => SceneError::Raster { path: bg_path.clone(), source },
    })?;

    let lf = &file.lighting;
    Ok(SceneDescription {
        intrinsics: file.camera,
        labels,
        depth,
        lighting: Lighting {
            mode: lf.mode,
            sun_azimuth: lf.sun_azimuth,
            sun_elevation: lf.sun_elevation,
            directional_intensity: lf.directional_intensity,
            ambient_intensity: lf.ambient_intensity,
        },
        shadow_mask,
        lanes: file
            .lanes
            .iter()
            .map(|l| Lane::new(l.centerline.iter().map(|p| Point2::new(p[0], p[1])).collect(), l.width_m))
            .collect(),
        crosswalks: file
            .crosswalks
            .iter()
            .map(|c| Crosswalk {
                polygon: c.polygon.iter().map(|p| Point2::new(p[0], p[1])).collect(),
                stop_lines: c.stop_lines.clone(),
                schedule: c.schedule,
            })
            .collect(),
        background,
        drivable_threshold: file.drivable_threshold,
        wall_depth_m: file.wall_depth_m,
    })
}

/// Loads and validates a scenario; the shadow mask is intersected with the
/// ground labels.
pub fn load_scene(path: &Path) -> Result<SceneDescription, SceneError> {
    let mut scene = load_scene_unvalidated(path)?;
    scene.validate()?;
    scene.intersect_shadow_with_ground();
    Ok(scene)
}

/// Writes `path` plus sidecars `<stem>.labels.svr`, `<stem>.depth.svr`,
/// `<stem>.shadow.svr` and `<stem>.bg.ppm` next to it.
pub fn save_scene(scene: &SceneDescription, path: &Path) -> Result<(), SceneError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scene");
    let names = RasterPaths {
        labels: format!("{stem}.labels.svr"),
        depth: format!("{stem}.depth.svr"),
        shadow: format!("{stem}.shadow.svr"),
        background: format!("{stem}.bg.ppm"),
    };
    let io = |p: PathBuf| move |source| SceneError::Io { path: p, source };

    let write_svr = |name: &str, svr: SvrRaster| -> Result<(), SceneError> {
        let p = dir.join(name);
        fs::write(&p, svr.encode()).map_err(io(p.clone()))
    };
    write_svr(&names.labels, SvrRaster::from_u8(&scene.labels.map(|&l| l as u8)))?;
    write_svr(&names.depth, SvrRaster::from_f32(&scene.depth))?;
    write_svr(&names.shadow, SvrRaster::from_u8(&scene.shadow_mask.map(|&b| b as u8)))?;
    let bg = dir.join(&names.background);
    fs::write(&bg, raster::encode_ppm(&scene.background)).map_err(io(bg.clone()))?;

    let l = &scene.lighting;
    let file = ScenarioFile {
        camera: scene.intrinsics,
        lighting: LightingFile {
            mode: l.mode,
            sun_azimuth: l.sun_azimuth,
            sun_elevation: l.sun_elevation,
            directional_intensity: l.directional_intensity,
            ambient_intensity: l.ambient_intensity,
        },
        rasters: names,
        drivable_threshold: scene.drivable_threshold,
        wall_depth_m: scene.wall_depth_m,
        lanes: scene
            .lanes
            .iter()
            .map(|l| LaneFile { width_m: l.width_m, centerline: l.centerline.iter().map(|p| [p.x, p.y]).collect() })
            .collect(),
        crosswalks: scene
            .crosswalks
            .iter()
            .map(|c| CrosswalkFile {
                polygon: c.polygon.iter().map(|p| [p.x, p.y]).collect(),
                stop_lines: c.stop_lines.clone(),
                schedule: c.schedule,
            })
            .collect(),
    };
    let text = toml::to_string(&file).map_err(|e| SceneError::Parse(e.to_string()))?;
    fs::write(path, text).map_err(io(path.to_path_buf()))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_scene() -> SceneDescription {
        let intrinsics = CameraIntrinsics { focal_length_px: 20.0, width_px: 16, height_px: 16 };
        SceneDescription {
            intrinsics,
            labels: Raster::from_fn(16, 16, |_, y| if y >= 8 { Label::Sidewalk } else { Label::Other }),
            depth: Raster::filled(16, 16, 5.0),
            lighting: Lighting {
                mode: LightingMode::Diffuse,
                sun_azimuth: 0.0,
                sun_elevation: FRAC_PI_2,
                directional_intensity: 0.0,
                ambient_intensity: 1.0,
            },
            shadow_mask: Raster::filled(16, 16, false),
            lanes: vec![],
            crosswalks: vec![],
            background: Raster::filled(16, 16, [120, 130, 140]),
            drivable_threshold: DEFAULT_DRIVABLE_THRESHOLD,
            wall_depth_m: None,
        }
    }

    #[test]
    fn minimal_scene_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.scn");
        let scene = tiny_scene();
        save_scene(&scene, &path).unwrap();
        let loaded = load_scene(&path).unwrap();
        assert_eq!(loaded.lanes.len(), 0);
        assert_eq!(loaded.lighting.mode, LightingMode::Diffuse);
        assert_eq!(loaded, scene);
    }

    #[test]
    fn shadow_on_wall_is_cleared() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.scn");
        let mut scene = tiny_scene();
        scene.labels.set(3, 3, Label::Wall);
        scene.shadow_mask.set(3, 3, true);
        scene.shadow_mask.set(3, 12, true);
        save_scene(&scene, &path).unwrap();
        let loaded = load_scene(&path).unwrap();
        assert!(!*loaded.shadow_mask.get(3, 3));
        assert!(*loaded.shadow_mask.get(3, 12));
    }

    #[test]
    fn zero_focal_length_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.scn");
        let mut scene = tiny_scene();
        scene.intrinsics.focal_length_px = 0.0;
        save_scene(&scene, &path).unwrap();
        let err = load_scene(&path).unwrap_err();
        assert!(matches!(&err, SceneError::Invalid { field, .. } if field == "focal_length_px"), "{err}");
    }

    #[test]
    fn dimension_mismatch_names_raster() {
        let mut scene = tiny_scene();
        scene.depth = Raster::filled(16, 17, 5.0);
        let err = scene.validate().unwrap_err();
        assert!(err.to_string().contains("depth"), "{err}");
    }

    #[test]
    fn malformed_file_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.scn");
        fs::write(&path, "camera = 3\n").unwrap();
        assert!(matches!(load_scene(&path), Err(SceneError::Parse(_))));
    }

    #[test]
    fn lane_arc_length() {
        let lane = Lane::new(vec![Point2::new(0.0, 0.0), Point2::new(0.0, 10.0), Point2::new(10.0, 10.0)], 3.5);
        assert_eq!(lane.length(), 20.0);
        assert!((lane.point_at(15.0) - Point2::new(5.0, 10.0)).norm() < 1e-12);
        assert!((lane.point_at(-2.0) - Point2::new(0.0, -2.0)).norm() < 1e-12);
        assert!((lane.project(&Point2::new(0.3, 4.0)) - 4.0).abs() < 1e-12);
        assert!((lane.project(&Point2::new(7.0, 10.2)) - 17.0).abs() < 1e-12);
    }

    #[test]
    fn stop_line_must_precede_crossing() {
        let mut scene = tiny_scene();
        scene.lanes.push(Lane::new(vec![Point2::new(0.0, 0.0), Point2::new(0.0, 30.0)], 3.5));
        let poly =
            vec![Point2::new(-3.0, 10.0), Point2::new(3.0, 10.0), Point2::new(3.0, 13.0), Point2::new(-3.0, 13.0)];
        scene.crosswalks.push(Crosswalk {
            polygon: poly.clone(),
            stop_lines: vec![StopLine { lane: 0, arc: 9.0 }],
            schedule: None,
        });
        assert!(scene.validate().is_ok());
        scene.crosswalks[0].stop_lines[0].arc = 11.0;
        assert!(scene.validate().is_err());
    }
}
