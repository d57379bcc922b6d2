//! Bird's-eye-view walkable world built from the label raster.
//!
//! Walkable cells are found by projecting every cell center into the image
//! and reading its label. Sidewalk components (plus road when the scene is
//! pedestrian-only) are dilated and replaced by their convex hull, which
//! closes the gaps that poles and other thin objects cut into the visible
//! ground. Crosswalk cells are added without dilation so the hulls never
//! swallow the roadway. Obstacles are recorded at their ground contact
//! point and carved out of the walkable map.

use super::grid::GridSpec;
use super::morph::{self, Connectivity};
use super::plane::GroundFrame;
use super::GeometryError;
use crate::polygon::{self, Point2};
use crate::raster::{Mask, Raster};
use crate::scene::{CameraIntrinsics, GroundPlane, Label, SemanticRaster};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneClass {
    PedestrianOnly,
    Mixed,
}

/// Pedestrian-only iff the road-pixel fraction is strictly below `threshold`.
pub fn classify_scene(raster: &SemanticRaster, threshold: f64) -> SceneClass {
    let road = raster.data().iter().filter(|&&l| l == Label::Road).count();
    let frac = road as f64 / raster.data().len().max(1) as f64;
    if frac < threshold {
        SceneClass::PedestrianOnly
    } else {
        SceneClass::Mixed
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BevParams {
    pub cell_size: f64,
    /// Dilation radius in cells applied before taking each hull.
    pub dilation_radius: f64,
    /// Radius in cells of the disk stamped at each obstacle contact.
    pub obstacle_radius: f64,
    /// Cells farther than this from the camera foot are out of view.
    pub max_range: f64,
}

impl Default for BevParams {
    fn default() -> Self {
        Self { cell_size: 0.25, dilation_radius: 2.0, obstacle_radius: 1.0, max_range: 30.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BevGrid {
    pub spec: GridSpec,
    pub walkable: Mask,
    pub obstacle: Mask,
    /// Hull component of each walkable cell, `-1` elsewhere.
    pub component_id: Raster<i32>,
    /// 4-connected region of each walkable cell, `-1` elsewhere.
    pub region: Raster<i32>,
    /// Cells whose center is visible in the image.
    pub in_view: Mask,
    /// Visible cells bordering the edge of the camera frustum.
    pub frustum_edge: Mask,
    /// Hull polygon of each component, counter-clockwise.
    pub hulls: Vec<Vec<Point2>>,
}

impl BevGrid {
    /// Wraps explicit masks, e.g. for synthetic worlds. Every cell is in view
    /// and the grid border is the frustum edge. Components are 4-connected
    /// regions of `walkable & !obstacle`.
    pub fn from_masks(spec: GridSpec, walkable: Mask, obstacle: Mask) -> Self {
        let walkable = Raster::from_fn(spec.cols, spec.rows, |i, j| *walkable.get(i, j) && !*obstacle.get(i, j));
        let (region, n) = morph::label_components(&walkable, Connectivity::Four);
        let hulls = (0..n as i32)
            .map(|k| {
                let pts: Vec<Point2> =
                    region.iter_xy().filter(|(_, _, &r)| r == k).map(|(i, j, _)| spec.center(i, j)).collect();
                polygon::convex_hull(&pts)
            })
            .collect();
        let frustum_edge =
            Raster::from_fn(spec.cols, spec.rows, |i, j| i == 0 || j == 0 || i + 1 == spec.cols || j + 1 == spec.rows);
        Self {
            spec,
            component_id: region.clone(),
            region,
            in_view: Raster::filled(spec.cols, spec.rows, true),
            frustum_edge,
            walkable,
            obstacle,
            hulls,
        }
    }

    #[inline]
    pub fn is_walkable(&self, i: usize, j: usize) -> bool {
        *self.walkable.get(i, j) && !*self.obstacle.get(i, j)
    }

    /// Walkable cell containing `p`.
    pub fn walkable_cell(&self, p: &Point2) -> Option<(usize, usize)> {
        self.spec.cell_of(p).filter(|&(i, j)| self.is_walkable(i, j))
    }

    pub fn region_of(&self, p: &Point2) -> Option<i32> {
        self.walkable_cell(p).map(|(i, j)| *self.region.get(i, j))
    }

    pub fn walkable_count(&self) -> usize {
        self.walkable.count()
    }
}

fn walkable_label(label: Label, class: SceneClass) -> bool {
    match label {
        Label::Sidewalk => true,
        Label::Road | Label::Crosswalk => class == SceneClass::PedestrianOnly,
        _ => false,
    }
}

/// Rasterizes a convex polygon onto the grid (cell centers inside).
pub fn rasterize_convex(spec: &GridSpec, poly: &[Point2]) -> Vec<(usize, usize)> {
    if poly.len() < 3 {
        return poly.iter().filter_map(|p| spec.cell_of(p)).collect();
    }
    let (mut lo, mut hi) = (Point2::repeat(f64::INFINITY), Point2::repeat(f64::NEG_INFINITY));
    for p in poly {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let (fx0, fy0) = spec.continuous(&lo);
    let (fx1, fy1) = spec.continuous(&hi);
    let i0 = fx0.floor().max(0.0) as usize;
    let j0 = fy0.floor().max(0.0) as usize;
    let i1 = (fx1.ceil().max(0.0) as usize).min(spec.cols.saturating_sub(1));
    let j1 = (fy1.ceil().max(0.0) as usize).min(spec.rows.saturating_sub(1));
    let mut out = Vec::new();
    for j in j0..=j1 {
        for i in i0..=i1 {
            if polygon::convex_contains(poly, &spec.center(i, j), 1e-9) {
                out.push((i, j));
            }
        }
    }
    out
}

/// Ground contact points of obstacles: the bottom edge of each vertical run
/// of obstacle pixels that rests on something other than an obstacle or a
/// wall (walkable surfaces, but also grass and other unlabeled ground).
pub fn obstacle_contacts(raster: &SemanticRaster, frame: &GroundFrame, intrinsics: &CameraIntrinsics) -> Vec<Point2> {
    let (w, h) = raster.dims();
    let mut out = Vec::new();
    for col in 0..w {
        for row in 0..h.saturating_sub(1) {
            if *raster.get(col, row) == Label::Obstacle
                && !matches!(raster.get(col, row + 1), Label::Obstacle | Label::Wall)
            {
                let (x, y) = intrinsics.pixel_center(col, row);
                if let Ok(p) = frame.pixel_to_ground(x, y + 0.5) {
                    out.push(p);
                }
            }
        }
    }
    out
}

pub fn build_bev(
    raster: &SemanticRaster,
    plane: &GroundPlane,
    intrinsics: &CameraIntrinsics,
    params: &BevParams,
    class: SceneClass,
) -> Result<BevGrid, GeometryError> {
    let frame = GroundFrame::new(*plane, intrinsics);
    let cs = params.cell_size;

    // extent from the walkable and crosswalk pixels that land in range
    let (mut lo, mut hi) = (Point2::repeat(f64::INFINITY), Point2::repeat(f64::NEG_INFINITY));
    let mut any = false;
    for (col, row, &label) in raster.iter_xy() {
        if !(walkable_label(label, class) || label == Label::Crosswalk) {
            continue;
        }
        let (x, y) = intrinsics.pixel_center(col, row);
        if let Ok(p) = frame.pixel_to_ground(x, y) {
            if frame.range(&p) <= params.max_range {
                lo = lo.inf(&p);
                hi = hi.sup(&p);
                any = true;
            }
        }
    }
    if !any {
        return Err(GeometryError::EmptyWorld);
    }
    let margin = params.dilation_radius.ceil() as usize + params.obstacle_radius.ceil() as usize + 2;
    let spec = GridSpec::covering(lo, hi, cs, margin);

    // sample labels at projected cell centers
    let mut in_view = Raster::filled(spec.cols, spec.rows, false);
    let mut hull_seed = Raster::filled(spec.cols, spec.rows, false);
    let mut crossing = Raster::filled(spec.cols, spec.rows, false);
    for j in 0..spec.rows {
        for i in 0..spec.cols {
            let p = spec.center(i, j);
            if frame.range(&p) > params.max_range {
                continue;
            }
            let Ok((x, y)) = frame.ground_to_pixel(&p) else { continue };
            let Some((col, row)) = intrinsics.pixel_at(x, y) else { continue };
            in_view.set(i, j, true);
            let label = *raster.get(col, row);
            if walkable_label(label, class) {
                hull_seed.set(i, j, true);
            } else if label == Label::Crosswalk {
                crossing.set(i, j, true);
            }
        }
    }
    if hull_seed.count() + crossing.count() == 0 {
        return Err(GeometryError::EmptyWorld);
    }

    let mut walkable = Raster::filled(spec.cols, spec.rows, false);
    let mut component_id = Raster::filled(spec.cols, spec.rows, -1i32);
    let mut hulls = Vec::new();
    let disk = morph::disk_offsets(params.dilation_radius);

    let mut add_components = |seed: &Mask, dilate: bool, hulls: &mut Vec<Vec<Point2>>| {
        let (labels, n) = morph::label_components(seed, Connectivity::Eight);
        let mut members: Vec<Vec<Point2>> = vec![Vec::new(); n];
        for (i, j, &k) in labels.iter_xy() {
            if k >= 0 {
                members[k as usize].push(spec.center(i, j));
            }
        }
        for pts in members {
            let core = polygon::convex_hull(&pts);
            let hull = if dilate {
                let grown: Vec<Point2> = core
                    .iter()
                    .flat_map(|p| disk.iter().map(move |&(dx, dy)| p + Point2::new(dx as f64, dy as f64) * cs))
                    .collect();
                polygon::convex_hull(&grown)
            } else {
                core
            };
            let id = hulls.len() as i32;
            let cells = if hull.len() >= 3 {
                rasterize_convex(&spec, &hull)
            } else {
                pts.iter().filter_map(|p| spec.cell_of(p)).collect()
            };
            for (i, j) in cells {
                if !*walkable.get(i, j) {
                    walkable.set(i, j, true);
                    component_id.set(i, j, id);
                }
            }
            hulls.push(hull);
        }
    };
    add_components(&hull_seed, true, &mut hulls);
    add_components(&crossing, false, &mut hulls);

    let mut obstacle = Raster::filled(spec.cols, spec.rows, false);
    let stamp = morph::disk_offsets(params.obstacle_radius);
    for p in obstacle_contacts(raster, &frame, intrinsics) {
        let Some((ci, cj)) = spec.cell_of(&p) else { continue };
        for &(dx, dy) in &stamp {
            let (i, j) = (ci as i64 + dx, cj as i64 + dy);
            if i >= 0 && j >= 0 && (i as usize) < spec.cols && (j as usize) < spec.rows {
                obstacle.set(i as usize, j as usize, true);
            }
        }
    }
    for (k, o) in obstacle.data().iter().enumerate() {
        if *o {
            walkable.data_mut()[k] = false;
            component_id.data_mut()[k] = -1;
        }
    }

    let (region, _) = morph::label_components(&walkable, Connectivity::Four);
    let frustum_edge = Raster::from_fn(spec.cols, spec.rows, |i, j| {
        *in_view.get(i, j)
            && [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)]
                .iter()
                .any(|&(dx, dy)| in_view.try_get(i as i64 + dx, j as i64 + dy) != Some(&true))
    });

    Ok(BevGrid { spec, walkable, obstacle, component_id, region, in_view, frustum_edge, hulls })
}
