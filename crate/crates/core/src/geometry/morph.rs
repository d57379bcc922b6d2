//! Binary morphology and connected-component labeling on grids.

use std::collections::VecDeque;

use crate::raster::{Mask, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(i64, i64)] {
        match self {
            Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
            Connectivity::Eight => &[(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)],
        }
    }
}

/// Labels true cells; returns the label grid (`-1` for false cells) and the
/// number of components. Labels are assigned in row-major scan order.
pub fn label_components(mask: &Mask, conn: Connectivity) -> (Raster<i32>, usize) {
    let (w, h) = mask.dims();
    let mut labels = Raster::filled(w, h, -1i32);
    let mut next = 0i32;
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            if !*mask.get(x, y) || *labels.get(x, y) >= 0 {
                continue;
            }
            labels.set(x, y, next);
            queue.push_back((x as i64, y as i64));
            while let Some((cx, cy)) = queue.pop_front() {
                for &(dx, dy) in conn.offsets() {
                    let (nx, ny) = (cx + dx, cy + dy);
                    if mask.try_get(nx, ny) == Some(&true) && *labels.get(nx as usize, ny as usize) < 0 {
                        labels.set(nx as usize, ny as usize, next);
                        queue.push_back((nx, ny));
                    }
                }
            }
            next += 1;
        }
    }
    (labels, next as usize)
}

/// Integer offsets within Euclidean distance `radius` (in cells).
pub fn disk_offsets(radius: f64) -> Vec<(i64, i64)> {
    let r = radius.floor() as i64;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if ((dx * dx + dy * dy) as f64) <= radius * radius + 1e-9 {
                out.push((dx, dy));
            }
        }
    }
    out
}

pub fn dilate(mask: &Mask, offsets: &[(i64, i64)]) -> Mask {
    let (w, h) = mask.dims();
    let mut out = Raster::filled(w, h, false);
    for (x, y, &v) in mask.iter_xy() {
        if !v {
            continue;
        }
        for &(dx, dy) in offsets {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                out.set(nx as usize, ny as usize, true);
            }
        }
    }
    out
}

/// Erosion; cells outside the grid count as false.
pub fn erode(mask: &Mask, offsets: &[(i64, i64)]) -> Mask {
    Raster::from_fn(mask.width(), mask.height(), |x, y| {
        offsets.iter().all(|&(dx, dy)| mask.try_get(x as i64 + dx, y as i64 + dy) == Some(&true))
    })
}

/// Morphological closing (dilate then erode) with the same element.
pub fn close(mask: &Mask, offsets: &[(i64, i64)]) -> Mask {
    erode(&dilate(mask, offsets), offsets)
}
