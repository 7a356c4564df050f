use std::sync::Arc;

/// Masked pixels of an image and their neighbourhood structure.
///
/// Masked pixels are numbered in row-major order; all per-pixel network
/// batches use this numbering.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelGrid {
    pub width: usize,
    pub height: usize,
    pixels: Vec<usize>,
    lookup: Vec<usize>,
}

/// Finite-difference stencil of one image axis over the masked pixels.
#[derive(Clone, Debug)]
pub struct AxisStencil {
    pub plus: Arc<[usize]>,
    pub minus: Arc<[usize]>,
    /// `1 / (span * pixel size)` in normalized units; 0 when no neighbour exists.
    pub inv_span: Vec<f64>,
}

const NONE: usize = usize::MAX;

impl PixelGrid {
    pub fn from_mask(width: usize, height: usize, mask: &[bool]) -> Self {
        assert_eq!(mask.len(), width * height);
        let pixels: Vec<usize> = (0..width * height).filter(|&p| mask[p]).collect();
        let mut lookup = vec![NONE; width * height];
        for (i, &p) in pixels.iter().enumerate() {
            lookup[p] = i;
        }
        PixelGrid { width, height, pixels, lookup }
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Flat image index of masked pixel `i`.
    pub fn flat(&self, i: usize) -> usize {
        self.pixels[i]
    }

    pub fn flat_indices(&self) -> &[usize] {
        &self.pixels
    }

    pub fn index_of(&self, row: usize, col: usize) -> Option<usize> {
        if row >= self.height || col >= self.width {
            return None;
        }
        Some(self.lookup[row * self.width + col]).filter(|&i| i != NONE)
    }

    pub fn contains(&self, flat: usize) -> bool {
        self.lookup[flat] != NONE
    }

    /// Size of one pixel in normalized units (the longer image side spans 2).
    pub fn pixel_size(&self) -> f64 {
        2.0 / self.width.max(self.height) as f64
    }

    /// Normalized coordinates of a pixel-plane position (pixel units).
    pub fn normalize(&self, x: f64, y: f64) -> [f64; 2] {
        let s = self.width.max(self.height) as f64;
        [(2.0 * x - self.width as f64) / s, (2.0 * y - self.height as f64) / s]
    }

    /// Normalized coordinates of every masked pixel centre.
    pub fn coords(&self) -> Vec<[f64; 2]> {
        self.pixels.iter().map(|&p| self.normalize((p % self.width) as f64 + 0.5, (p / self.width) as f64 + 0.5)).collect()
    }

    /// Normalized coordinates of every pixel centre of the full image.
    pub fn all_coords(&self) -> Vec<[f64; 2]> {
        (0..self.width * self.height).map(|p| self.normalize((p % self.width) as f64 + 0.5, (p / self.width) as f64 + 0.5)).collect()
    }

    /// Central differences where both neighbours are masked, one-sided where
    /// only one is, none otherwise. `axis` 0 is x (columns), 1 is y (rows).
    pub fn stencil(&self, axis: usize) -> AxisStencil {
        let step = self.pixel_size();
        let mut plus = Vec::with_capacity(self.len());
        let mut minus = Vec::with_capacity(self.len());
        let mut inv_span = Vec::with_capacity(self.len());
        for (i, &p) in self.pixels.iter().enumerate() {
            let (r, c) = (p / self.width, p % self.width);
            let (fwd, back) = if axis == 0 {
                (self.index_of(r, c + 1), c.checked_sub(1).and_then(|c| self.index_of(r, c)))
            } else {
                (self.index_of(r + 1, c), r.checked_sub(1).and_then(|r| self.index_of(r, c)))
            };
            let (hi, lo, span) = match (fwd, back) {
                (Some(f), Some(b)) => (f, b, 2.0),
                (Some(f), None) => (f, i, 1.0),
                (None, Some(b)) => (i, b, 1.0),
                (None, None) => (i, i, 0.0),
            };
            plus.push(hi);
            minus.push(lo);
            inv_span.push(if span > 0.0 { 1.0 / (span * step) } else { 0.0 });
        }
        AxisStencil { plus: plus.into(), minus: minus.into(), inv_span }
    }

    /// Right and down neighbour pairs with both pixels masked.
    pub fn neighbor_pairs(&self) -> (Arc<[usize]>, Arc<[usize]>) {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (i, &p) in self.pixels.iter().enumerate() {
            let (r, c) = (p / self.width, p % self.width);
            for j in [self.index_of(r, c + 1), self.index_of(r + 1, c)].into_iter().flatten() {
                a.push(i);
                b.push(j);
            }
        }
        (a.into(), b.into())
    }
}
