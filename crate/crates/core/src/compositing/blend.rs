//! Masks, shadow color matching, matting and depth-tested blending.

use super::{DEFAULT_SHADOW_FACTOR, PATCH_SIDE, SHADOW_FACTOR_RANGE};
use crate::geometry::GroundFrame;
use crate::raster::{Mask, Raster, Rgb, RgbImage};
use crate::scene::{CameraIntrinsics, DepthRaster, GroundPlane, Label, SemanticRaster};

/// Object mask: finite proxy depth. Shadow mask: pixels whose color departs
/// from the reference render, minus object pixels.
pub fn extract_masks(f_rgb: &RgbImage, f_depth: &Raster<f32>, reference: &RgbImage) -> (Mask, Mask) {
    let m_o = f_depth.map(|d| d.is_finite());
    let (w, h) = f_rgb.dims();
    let m_s = Raster::from_fn(w, h, |x, y| !*m_o.get(x, y) && f_rgb.get(x, y) != reference.get(x, y));
    (m_s, m_o)
}

/// Largest axis-aligned all-true square as `(col, row, side)` of its top-left
/// corner. Ties keep the first bottom-right corner in row-major order.
pub fn largest_square(mask: &Mask) -> Option<(usize, usize, usize)> {
    let (w, h) = mask.dims();
    let mut prev = vec![0usize; w];
    let mut cur = vec![0usize; w];
    let mut best: Option<(usize, usize, usize)> = None;
    for y in 0..h {
        for x in 0..w {
            cur[x] = if !*mask.get(x, y) {
                0
            } else if x == 0 || y == 0 {
                1
            } else {
                1 + prev[x].min(prev[x - 1]).min(cur[x - 1])
            };
            let side = cur[x];
            if side > 0 && best.is_none_or(|(_, _, s)| side > s) {
                best = Some((x + 1 - side, y + 1 - side, side));
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

fn patch_mean(img: &RgbImage, (x0, y0, side): (usize, usize, usize)) -> [f64; 3] {
    let mut sum = [0.0f64; 3];
    for y in y0..y0 + side {
        for x in x0..x0 + side {
            let p = img.get(x, y);
            for c in 0..3 {
                sum[c] += p[c] as f64;
            }
        }
    }
    let n = (side * side) as f64;
    sum.map(|s| s / n)
}

/// Per-channel ratio between the largest shadowed and the largest lit
/// ground squares of the background. Falls back to
/// [`DEFAULT_SHADOW_FACTOR`] when either square is smaller than
/// [`PATCH_SIDE`] or the lit patch is black.
pub fn shadow_color_factor(background: &RgbImage, shadow: &Mask, labels: &SemanticRaster) -> Rgb {
    let (w, h) = background.dims();
    let ground = |x: usize, y: usize| labels.get(x, y).is_ground();
    let lit = Raster::from_fn(w, h, |x, y| ground(x, y) && !*shadow.get(x, y));
    let dark = Raster::from_fn(w, h, |x, y| ground(x, y) && *shadow.get(x, y));
    let (Some(pl), Some(pd)) = (largest_square(&lit), largest_square(&dark)) else {
        return DEFAULT_SHADOW_FACTOR;
    };
    if pl.2 < PATCH_SIDE || pd.2 < PATCH_SIDE {
        return DEFAULT_SHADOW_FACTOR;
    }
    let (ml, md) = (patch_mean(background, pl), patch_mean(background, pd));
    if ml.iter().any(|&v| v <= 0.0) {
        return DEFAULT_SHADOW_FACTOR;
    }
    let (lo, hi) = SHADOW_FACTOR_RANGE;
    [0, 1, 2].map(|c| ((md[c] / ml[c]) as f32).clamp(lo, hi))
}

/// Separable Gaussian blur with clamped borders; the kernel spans three
/// standard deviations each way.
pub fn gaussian_blur(img: &Raster<f32>, sigma: f64) -> Raster<f32> {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel: Vec<f64> = (-radius..=radius).map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    let (w, h) = img.dims();
    let pass = |src: &Raster<f32>, horizontal: bool| {
        Raster::from_fn(w, h, |x, y| {
            let mut acc = 0.0f64;
            for (k, wk) in kernel.iter().enumerate() {
                let o = k as i64 - radius;
                let v = if horizontal {
                    *src.get((x as i64 + o).clamp(0, w as i64 - 1) as usize, y)
                } else {
                    *src.get(x, (y as i64 + o).clamp(0, h as i64 - 1) as usize)
                };
                acc += wk * v as f64;
            }
            acc as f32
        })
    };
    pass(&pass(img, true), false)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShadowComposite {
    pub f_ws: RgbImage,
    pub matte: Raster<f32>,
}

/// Blends the synthesized shadow into the background. The shadow mask loses
/// pixels already shadowed in the background, is blurred into a matte `m`,
/// and darkens `B` toward `B * s`. Object pixels take the proxy color.
pub fn composite_shadow(
    background: &RgbImage,
    f_rgb: &RgbImage,
    m_s: &Mask,
    m_o: &Mask,
    s: Rgb,
    existing_shadow: &Mask,
    blur_sigma: f64,
) -> ShadowComposite {
    let (w, h) = background.dims();
    let hard = Raster::from_fn(w, h, |x, y| if *m_s.get(x, y) && !*existing_shadow.get(x, y) { 1.0f32 } else { 0.0 });
    let blurred = gaussian_blur(&hard, blur_sigma);
    let matte = Raster::from_fn(w, h, |x, y| {
        if *existing_shadow.get(x, y) || *m_o.get(x, y) {
            return 0.0;
        }
        match *blurred.get(x, y) {
            m if m < 1e-6 => 0.0,
            m if m > 1.0 - 1e-6 => 1.0,
            m => m,
        }
    });
    let f_ws = Raster::from_fn(w, h, |x, y| {
        if *m_o.get(x, y) {
            return *f_rgb.get(x, y);
        }
        let m = *matte.get(x, y);
        let b = background.get(x, y);
        [0, 1, 2].map(|c| b[c] * ((1.0 - m) + m * s[c]))
    });
    ShadowComposite { f_ws, matte }
}

/// Replaces ground depths with the exact plane depth and gives each vertical
/// run of obstacle pixels the plane depth at its bottom edge.
pub fn refine_background_depth(
    depth: &DepthRaster,
    labels: &SemanticRaster,
    plane: &GroundPlane,
    intrinsics: &CameraIntrinsics,
) -> DepthRaster {
    let frame = GroundFrame::new(*plane, intrinsics);
    let (w, h) = depth.dims();
    let mut out = depth.clone();
    for x in 0..w {
        let mut y = 0;
        while y < h {
            let label = *labels.get(x, y);
            if label.is_ground() {
                let (px, py) = intrinsics.pixel_center(x, y);
                if let Ok(z) = frame.plane_depth(px, py) {
                    out.set(x, y, z as f32);
                }
                y += 1;
            } else if label == Label::Obstacle {
                let start = y;
                while y < h && *labels.get(x, y) == Label::Obstacle {
                    y += 1;
                }
                let (px, py) = intrinsics.pixel_center(x, y - 1);
                if let Ok(z) = frame.plane_depth(px, py + 0.5) {
                    for yy in start..y {
                        out.set(x, yy, z as f32);
                    }
                }
            } else {
                y += 1;
            }
        }
    }
    out
}

/// Object pixels show `f_ws` when in front of the background and `B` when
/// behind it. Non-object pixels carry `f_ws`, which is `B` outside the
/// shadow matte.
pub fn composite_final(f_ws: &RgbImage, f_depth: &Raster<f32>, d_bg: &DepthRaster, background: &RgbImage) -> RgbImage {
    let (w, h) = f_ws.dims();
    Raster::from_fn(w, h, |x, y| {
        let d = *f_depth.get(x, y);
        if d.is_finite() && d > *d_bg.get(x, y) {
            *background.get(x, y)
        } else {
            *f_ws.get(x, y)
        }
    })
}
