//! Fast marching solver for `|grad phi| = C` on the ground grid.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::geometry::GridSpec;
use crate::polygon::Point2;
use crate::raster::Raster;

/// Smallest finite cost accepted by the solver.
pub const COST_FLOOR: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EikonalError {
    #[error("no target cells")]
    NoTargets,
    #[error("target cell ({0}, {1}) has infinite cost")]
    TargetBlocked(usize, usize),
    #[error("target cell ({0}, {1}) is outside the grid")]
    TargetOutside(usize, usize),
    #[error("cost field and grid disagree in shape")]
    Shape,
    #[error("no finite potential around ({0:.3}, {1:.3})")]
    Stuck(f64, f64),
}

/// Values on the cells of a ground grid. `+inf` marks forbidden or
/// unreachable cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub spec: GridSpec,
    pub values: Raster<f64>,
}

impl ScalarField {
    pub fn filled(spec: GridSpec, v: f64) -> Self {
        Self { spec, values: Raster::filled(spec.cols, spec.rows, v) }
    }

    pub fn from_fn(spec: GridSpec, f: impl FnMut(usize, usize) -> f64) -> Self {
        Self { spec, values: Raster::from_fn(spec.cols, spec.rows, f) }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        *self.values.get(i, j)
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values.set(i, j, v);
    }

    /// Value at the cell containing `p`, `+inf` outside the grid.
    pub fn at(&self, p: &Point2) -> f64 {
        self.spec.cell_of(p).map(|(i, j)| self.get(i, j)).unwrap_or(f64::INFINITY)
    }

    pub fn has_nan(&self) -> bool {
        self.values.data().iter().any(|v| v.is_nan())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    value: f64,
    idx: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (value, idx)
        other.value.total_cmp(&self.value).then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Two-axis upwind update from the smallest frozen neighbor on each axis.
#[inline]
fn upwind(a: f64, b: f64, hc: f64) -> f64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    if !hi.is_finite() || hi - lo >= hc {
        return lo + hc;
    }
    let d = hi - lo;
    0.5 * (lo + hi + (2.0 * hc * hc - d * d).sqrt())
}

/// First-order fast marching from `targets` (cells, `phi = 0`) over `cost`.
/// Costs below [`COST_FLOOR`] are raised to it.
pub fn solve_eikonal(cost: &ScalarField, targets: &[(usize, usize)]) -> Result<ScalarField, EikonalError> {
    solve_eikonal_until(cost, targets, &[])
}

/// Like [`solve_eikonal`], but stops as soon as every finite-cost cell in
/// `required` (flat indices) is final. Cells not yet final are `+inf`;
/// final cells hold exactly the values of the full solve.
pub fn solve_eikonal_until(
    cost: &ScalarField,
    targets: &[(usize, usize)],
    required: &[usize],
) -> Result<ScalarField, EikonalError> {
    let spec = cost.spec;
    if cost.values.dims() != (spec.cols, spec.rows) {
        return Err(EikonalError::Shape);
    }
    if targets.is_empty() {
        return Err(EikonalError::NoTargets);
    }
    let (w, h) = (spec.cols, spec.rows);
    let cs = spec.cell_size;
    let c = cost.values.data();
    let mut phi = vec![f64::INFINITY; w * h];
    let mut frozen = vec![false; w * h];
    let mut heap = BinaryHeap::new();
    for &(i, j) in targets {
        if i >= w || j >= h {
            return Err(EikonalError::TargetOutside(i, j));
        }
        let idx = j * w + i;
        if !c[idx].is_finite() {
            return Err(EikonalError::TargetBlocked(i, j));
        }
        phi[idx] = 0.0;
        heap.push(Entry { value: 0.0, idx });
    }

    let mut pending: Vec<usize> = required.iter().copied().filter(|&k| k < w * h && c[k].is_finite()).collect();
    pending.sort_unstable();
    pending.dedup();
    let mut remaining = pending.len();
    let mut is_required = vec![false; if remaining > 0 { w * h } else { 0 }];
    for &k in &pending {
        is_required[k] = true;
    }
    while let Some(Entry { value, idx }) = heap.pop() {
        if frozen[idx] || value > phi[idx] {
            continue;
        }
        frozen[idx] = true;
        if !is_required.is_empty() && is_required[idx] {
            remaining -= 1;
            if remaining == 0 {
                break;
            }
        }
        let (i, j) = (idx % w, idx / w);
        let neighbors = [
            (i > 0).then(|| idx - 1),
            (i + 1 < w).then(|| idx + 1),
            (j > 0).then(|| idx - w),
            (j + 1 < h).then(|| idx + w),
        ];
        for n in neighbors.into_iter().flatten() {
            if frozen[n] || !c[n].is_finite() {
                continue;
            }
            let (ni, nj) = (n % w, n / w);
            let frozen_at = |k: usize| if frozen[k] { phi[k] } else { f64::INFINITY };
            let a = f64::min(
                if ni > 0 { frozen_at(n - 1) } else { f64::INFINITY },
                if ni + 1 < w { frozen_at(n + 1) } else { f64::INFINITY },
            );
            let b = f64::min(
                if nj > 0 { frozen_at(n - w) } else { f64::INFINITY },
                if nj + 1 < h { frozen_at(n + w) } else { f64::INFINITY },
            );
            let cand = upwind(a, b, cs * c[n].max(COST_FLOOR));
            if cand < phi[n] {
                phi[n] = cand;
                heap.push(Entry { value: cand, idx: n });
            }
        }
    }
    if !is_required.is_empty() {
        for (v, f) in phi.iter_mut().zip(&frozen) {
            if !f {
                *v = f64::INFINITY;
            }
        }
    }
    Ok(ScalarField { spec, values: Raster::from_vec(w, h, phi) })
}

/// Flat indices of the cells [`sample_gradient`] reads around `p`.
pub fn gradient_stencil(spec: &GridSpec, p: &Point2) -> Vec<usize> {
    let (fx, fy) = spec.continuous(p);
    let i0 = fx.floor() as i64;
    let j0 = fy.floor() as i64;
    let mut out = Vec::with_capacity(16);
    for j in j0 - 1..=j0 + 2 {
        for i in i0 - 1..=i0 + 2 {
            if i >= 0 && j >= 0 && (i as usize) < spec.cols && (j as usize) < spec.rows {
                out.push(spec.index(i as usize, j as usize));
            }
        }
    }
    out
}

/// Central-difference gradient at a node, one-sided next to infinite
/// neighbors. `None` when the node itself is infinite.
fn node_gradient(phi: &ScalarField, i: usize, j: usize) -> Option<Point2> {
    let v = phi.get(i, j);
    if !v.is_finite() {
        return None;
    }
    let h = phi.spec.cell_size;
    let axis = |lo: Option<f64>, hi: Option<f64>| -> f64 {
        let lo = lo.filter(|x| x.is_finite());
        let hi = hi.filter(|x| x.is_finite());
        match (lo, hi) {
            (Some(l), Some(u)) => (u - l) / (2.0 * h),
            (Some(l), None) => (v - l) / h,
            (None, Some(u)) => (u - v) / h,
            (None, None) => 0.0,
        }
    };
    let (w, hh) = (phi.spec.cols, phi.spec.rows);
    let gx = axis((i > 0).then(|| phi.get(i - 1, j)), (i + 1 < w).then(|| phi.get(i + 1, j)));
    let gy = axis((j > 0).then(|| phi.get(i, j - 1)), (j + 1 < hh).then(|| phi.get(i, j + 1)));
    Some(Point2::new(gx, gy))
}

/// Bilinear interpolation of node gradients at `p`. Corners with infinite
/// potential are dropped and the remaining weights renormalized.
pub fn sample_gradient(phi: &ScalarField, p: &Point2) -> Result<Point2, EikonalError> {
    let spec = &phi.spec;
    let (fx, fy) = spec.continuous(p);
    let fx = fx.clamp(0.0, (spec.cols - 1) as f64);
    let fy = fy.clamp(0.0, (spec.rows - 1) as f64);
    let i0 = (fx.floor() as usize).min(spec.cols.saturating_sub(2));
    let j0 = (fy.floor() as usize).min(spec.rows.saturating_sub(2));
    let (tx, ty) = (fx - i0 as f64, fy - j0 as f64);
    let mut acc = Point2::zeros();
    let mut wsum = 0.0;
    for (di, dj, wgt) in
        [(0, 0, (1.0 - tx) * (1.0 - ty)), (1, 0, tx * (1.0 - ty)), (0, 1, (1.0 - tx) * ty), (1, 1, tx * ty)]
    {
        let (i, j) = (i0 + di, j0 + dj);
        if i >= spec.cols || j >= spec.rows || wgt <= 0.0 {
            continue;
        }
        if let Some(g) = node_gradient(phi, i, j) {
            acc += g * wgt;
            wsum += wgt;
        }
    }
    if wsum <= 0.0 {
        // a zero-weight finite corner still gives a usable direction
        for (di, dj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            let (i, j) = (i0 + di, j0 + dj);
            if i < spec.cols && j < spec.rows {
                if let Some(g) = node_gradient(phi, i, j) {
                    return Ok(g);
                }
            }
        }
        return Err(EikonalError::Stuck(p.x, p.y));
    }
    Ok(acc / wsum)
}
