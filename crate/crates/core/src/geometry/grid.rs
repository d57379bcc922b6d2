use crate::polygon::Point2;

/// Placement of a regular grid on the ground. Cell `(i, j)` is centered at
/// `origin + (i, j) * cell_size`; `i` runs along ground `x`, `j` along `y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub cols: usize,
    pub rows: usize,
    pub cell_size: f64,
    pub origin: Point2,
}

impl GridSpec {
    /// Smallest grid covering `[min, max]` with `margin` extra cells per side.
    pub fn covering(min: Point2, max: Point2, cell_size: f64, margin: usize) -> Self {
        let m = margin as f64 * cell_size;
        let origin =
            Point2::new(((min.x - m) / cell_size).floor() * cell_size, ((min.y - m) / cell_size).floor() * cell_size);
        let cols = ((max.x + m - origin.x) / cell_size).ceil() as usize + 1;
        let rows = ((max.y + m - origin.y) / cell_size).ceil() as usize + 1;
        Self { cols, rows, cell_size, origin }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.cols * self.rows
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.cols + i
    }

    #[inline]
    pub fn cell_of_index(&self, idx: usize) -> (usize, usize) {
        (idx % self.cols, idx / self.cols)
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize) -> Point2 {
        self.origin + Point2::new(i as f64, j as f64) * self.cell_size
    }

    /// Continuous cell coordinates; integer values fall on cell centers.
    #[inline]
    pub fn continuous(&self, p: &Point2) -> (f64, f64) {
        ((p.x - self.origin.x) / self.cell_size, (p.y - self.origin.y) / self.cell_size)
    }

    /// Cell whose square contains `p`.
    #[inline]
    pub fn cell_of(&self, p: &Point2) -> Option<(usize, usize)> {
        let (fx, fy) = self.continuous(p);
        let (i, j) = ((fx + 0.5).floor(), (fy + 0.5).floor());
        (i >= 0.0 && j >= 0.0 && (i as usize) < self.cols && (j as usize) < self.rows)
            .then_some((i as usize, j as usize))
    }
}
