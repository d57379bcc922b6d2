//! Shadow occluder: a horizontal sheet at height `H` that re-casts the
//! photographed shadows onto inserted agents.
//!
//! Each shadowed ground point is traced toward the sun up to the sheet and
//! the hit cell is marked. Forward splatting alone leaves holes where the
//! sheet cells are smaller than the projected pixels, so every sheet cell is
//! also traced back down to the image and marked when it lands on a shadow
//! pixel; a radius-1 closing then joins what is left.

use super::grid::GridSpec;
use super::morph;
use super::plane::GroundFrame;
use super::GeometryError;
use crate::polygon::Point2;
use crate::raster::{Mask, Raster};
use crate::scene::{CameraIntrinsics, GroundPlane, Lighting, LightingMode, ShadowMaskRaster};

pub const DEFAULT_OCCLUDER_HEIGHT: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OccluderParams {
    pub height: f64,
    pub cell_size: f64,
}

impl Default for OccluderParams {
    fn default() -> Self {
        Self { height: DEFAULT_OCCLUDER_HEIGHT, cell_size: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShadowOccluder {
    pub height: f64,
    pub spec: GridSpec,
    pub mask: Mask,
}

impl ShadowOccluder {
    pub fn is_empty(&self) -> bool {
        self.mask.count() == 0
    }

    fn hit(&self, q: &Point2) -> bool {
        self.spec.cell_of(q).is_some_and(|(i, j)| *self.mask.get(i, j))
    }
}

pub fn build_shadow_occluder(
    shadow_mask: &ShadowMaskRaster,
    plane: &GroundPlane,
    intrinsics: &CameraIntrinsics,
    lighting: &Lighting,
    params: &OccluderParams,
) -> Result<ShadowOccluder, GeometryError> {
    if lighting.mode != LightingMode::Directional {
        return Err(GeometryError::OccluderNotApplicable);
    }
    let frame = GroundFrame::new(*plane, intrinsics);
    let shift = lighting.horizontal_offset_per_meter() * params.height;

    let mut lifted = Vec::new();
    for (col, row, &v) in shadow_mask.iter_xy() {
        if !v {
            continue;
        }
        let (x, y) = intrinsics.pixel_center(col, row);
        if let Ok(p) = frame.pixel_to_ground(x, y) {
            lifted.push(p + shift);
        }
    }
    if lifted.is_empty() {
        let spec = GridSpec { cols: 1, rows: 1, cell_size: params.cell_size, origin: Point2::zeros() };
        return Ok(ShadowOccluder { height: params.height, spec, mask: Raster::filled(1, 1, false) });
    }

    let (mut lo, mut hi) = (Point2::repeat(f64::INFINITY), Point2::repeat(f64::NEG_INFINITY));
    for q in &lifted {
        lo = lo.inf(q);
        hi = hi.sup(q);
    }
    let spec = GridSpec::covering(lo, hi, params.cell_size, 2);
    let mut mask = Raster::filled(spec.cols, spec.rows, false);
    for q in &lifted {
        if let Some((i, j)) = spec.cell_of(q) {
            mask.set(i, j, true);
        }
    }
    for j in 0..spec.rows {
        for i in 0..spec.cols {
            let g = spec.center(i, j) - shift;
            let Ok((x, y)) = frame.ground_to_pixel(&g) else { continue };
            if let Some((col, row)) = intrinsics.pixel_at(x, y) {
                if *shadow_mask.get(col, row) {
                    mask.set(i, j, true);
                }
            }
        }
    }
    let closed = morph::close(&mask, &morph::disk_offsets(1.0));
    // closing never removes cells, but erosion treats the border as empty
    let mask = Raster::from_fn(spec.cols, spec.rows, |i, j| *mask.get(i, j) || *closed.get(i, j));
    Ok(ShadowOccluder { height: params.height, spec, mask })
}

/// Whether the ray from ground point `p` at `height_m` toward the sun meets
/// an occluder cell. Always false under diffuse lighting.
pub fn is_shadowed(p: &Point2, height_m: f64, occluder: &ShadowOccluder, lighting: &Lighting) -> bool {
    if lighting.mode != LightingMode::Directional || height_m >= occluder.height {
        return false;
    }
    let q = p + lighting.horizontal_offset_per_meter() * (occluder.height - height_m);
    occluder.hit(&q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics { focal_length_px: 300.0, width_px: 320, height_px: 240 }
    }

    fn plane() -> GroundPlane {
        GroundPlane::new(0.0, 1.0 / 1.6, 0.03)
    }

    fn sun(azimuth: f64, elevation: f64) -> Lighting {
        Lighting {
            mode: LightingMode::Directional,
            sun_azimuth: azimuth,
            sun_elevation: elevation,
            directional_intensity: 0.7,
            ambient_intensity: 0.3,
        }
    }

    /// Shadow mask covering the ground rectangle `[x0, x1] x [y0, y1]`.
    fn shadow_rect(x0: f64, x1: f64, y0: f64, y1: f64) -> Mask {
        let frame = GroundFrame::new(plane(), &cam());
        Raster::from_fn(320, 240, |c, r| {
            let (x, y) = cam().pixel_center(c, r);
            frame.pixel_to_ground(x, y).is_ok_and(|p| p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1)
        })
    }

    fn generators(mask: &Mask) -> Vec<Point2> {
        let frame = GroundFrame::new(plane(), &cam());
        mask.iter_xy()
            .filter(|(_, _, &v)| v)
            .map(|(c, r, _)| {
                let (x, y) = cam().pixel_center(c, r);
                frame.pixel_to_ground(x, y).unwrap()
            })
            .collect()
    }

    #[test]
    fn diffuse_is_rejected() {
        let mut l = sun(0.0, 1.0);
        l.mode = LightingMode::Diffuse;
        let r =
            build_shadow_occluder(&shadow_rect(0.0, 1.0, 5.0, 6.0), &plane(), &cam(), &l, &OccluderParams::default());
        assert_eq!(r, Err(GeometryError::OccluderNotApplicable));
    }

    #[test]
    fn empty_mask_gives_empty_occluder() {
        let m = Raster::filled(320, 240, false);
        let occ = build_shadow_occluder(&m, &plane(), &cam(), &sun(0.0, 1.0), &OccluderParams::default()).unwrap();
        assert!(occ.is_empty());
    }

    #[test]
    fn zenith_sun_lifts_straight_up() {
        let m = shadow_rect(-1.0, 1.0, 6.0, 8.0);
        let occ =
            build_shadow_occluder(&m, &plane(), &cam(), &sun(0.0, FRAC_PI_2), &OccluderParams::default()).unwrap();
        for p in generators(&m) {
            let (i, j) = occ.spec.cell_of(&p).unwrap();
            assert!(*occ.mask.get(i, j));
        }
        assert!(occ.spec.cell_of(&Point2::new(3.0, 7.0)).is_none_or(|(i, j)| !*occ.mask.get(i, j)));
    }

    #[test]
    fn oblique_sun_shifts_by_height() {
        // tan(elevation) = 1: a ray rising H meters moves H meters sideways
        let h = 3.0;
        let m = shadow_rect(-0.5, 0.5, 6.0, 7.0);
        let occ =
            build_shadow_occluder(&m, &plane(), &cam(), &sun(0.0, FRAC_PI_4), &OccluderParams::default()).unwrap();
        for p in generators(&m) {
            let (i, j) = occ.spec.cell_of(&(p + Point2::new(h, 0.0))).unwrap();
            assert!(*occ.mask.get(i, j));
        }
        let (i, j) = occ.spec.cell_of(&Point2::new(3.0, 6.5)).unwrap();
        assert!(*occ.mask.get(i, j));
        // the sheet directly above the shadow stays clear
        assert!(occ.spec.cell_of(&Point2::new(0.0, 6.5)).is_none_or(|(i, j)| !*occ.mask.get(i, j)));
    }

    #[test]
    fn generators_are_shadowed_and_far_points_are_not() {
        let l = sun(2.0, 0.8);
        let m = shadow_rect(-2.0, 1.0, 5.0, 9.0);
        let occ = build_shadow_occluder(&m, &plane(), &cam(), &l, &OccluderParams::default()).unwrap();
        for p in generators(&m) {
            assert!(is_shadowed(&p, 0.0, &occ, &l));
        }
        assert!(!is_shadowed(&Point2::new(1.0 + 2.5, 7.0), 0.0, &occ, &l));
        assert!(!is_shadowed(&Point2::new(-2.0 - 2.5, 7.0), 0.0, &occ, &l));
    }

    #[test]
    fn half_height_matches_ray_offset() {
        let l = sun(0.0, FRAC_PI_4);
        let m = shadow_rect(-0.5, 0.5, 6.0, 7.0);
        let occ = build_shadow_occluder(&m, &plane(), &cam(), &l, &OccluderParams::default()).unwrap();
        // at H/2 the ray climbs the remaining H/2 and moves H/2 in +x
        for k in 0..60 {
            let p = Point2::new(-2.0 + k as f64 * 0.1, 6.5);
            let q = p + Point2::new(occ.height / 2.0, 0.0);
            let expected = occ.spec.cell_of(&q).is_some_and(|(i, j)| *occ.mask.get(i, j));
            assert_eq!(is_shadowed(&p, occ.height / 2.0, &occ, &l), expected);
        }
        // the sheet sits at x in [2.5, 3.5]; from H/2 the ray only moves 1.5 m
        assert!(is_shadowed(&Point2::new(1.5, 6.5), 1.5, &occ, &l));
        assert!(!is_shadowed(&Point2::new(0.0, 6.5), 1.5, &occ, &l));
    }
}
