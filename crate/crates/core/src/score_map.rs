//! Score-map container and the element-wise/region primitives shared by every
//! refinement stage.
//!
//! Maps are row-major with `(row = 0, col = 0)` at the top-left. Values are
//! held as `f64` in memory and narrowed to `f32` only when written to disk.

use crate::error::{Error, Result};

/// An `height x width` grid of anomaly scores, nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ScoreMap {
    /// Builds a map from row-major values.
    pub fn from_vec(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "map must be at least 1x1, got {width}x{height}"
            )));
        }
        let expected = width
            .checked_mul(height)
            .ok_or_else(|| Error::Dimension("map size overflows".into()))?;
        if values.len() != expected {
            return Err(Error::Dimension(format!(
                "{width}x{height} map needs {expected} values, got {}",
                values.len()
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn new_filled(width: usize, height: usize, fill: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&fill) {
            return Err(Error::Numeric(format!("fill {fill} is outside [0, 1]")));
        }
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "map must be at least 1x1, got {width}x{height}"
            )));
        }
        Self::from_vec(width, height, vec![fill; width * height])
    }

    /// Builds a map by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(width.saturating_mul(height));
        for r in 0..height {
            for c in 0..width {
                values.push(f(r, c));
            }
        }
        Self::from_vec(width, height, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        let i = self.index(row, col);
        self.values[i] = value;
    }

    /// Value at `(row, col)` with out-of-range coordinates snapped to the
    /// nearest edge (replicate border).
    #[inline]
    pub fn get_replicate(&self, row: isize, col: isize) -> f64 {
        let r = row.clamp(0, self.height as isize - 1) as usize;
        let c = col.clamp(0, self.width as isize - 1) as usize;
        self.get(r, c)
    }

    pub fn ensure_same_dims(&self, other: &ScoreMap) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::Dimension(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScoreMap {
        ScoreMap {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// True when every value lies in `[0, 1]`.
    pub fn is_unit(&self) -> bool {
        self.values.iter().all(|v| (0.0..=1.0).contains(v))
    }
}

#[inline]
pub(crate) fn clamp01(v: f64) -> f64 {
    // NaN maps to 0 so downstream stages always see a valid score.
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Clamps every value into `[0, 1]`.
pub fn clamp_unit(map: &ScoreMap) -> ScoreMap {
    map.map(clamp01)
}

/// A non-empty set of in-bounds pixels, kept sorted in row-major order with
/// duplicates removed.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PixelRegion {
    pixels: Vec<(usize, usize)>,
}

impl PixelRegion {
    /// Builds a region and validates it against a `width x height` grid.
    pub fn new(
        pixels: impl IntoIterator<Item = (usize, usize)>,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let mut pixels: Vec<(usize, usize)> = pixels.into_iter().collect();
        if pixels.is_empty() {
            return Err(Error::EmptyRegion);
        }
        if let Some(&(row, col)) = pixels.iter().find(|&&(r, c)| r >= height || c >= width) {
            return Err(Error::OutOfBounds {
                row,
                col,
                width,
                height,
            });
        }
        pixels.sort_unstable();
        pixels.dedup();
        Ok(Self { pixels })
    }

    /// Builds a region from a row-major boolean grid. Returns `None` when the
    /// grid has no set pixel.
    pub fn from_mask(mask: &[bool], width: usize) -> Option<Self> {
        let pixels: Vec<(usize, usize)> = mask
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| (i / width, i % width))
            .collect();
        (!pixels.is_empty()).then_some(Self { pixels })
    }

    pub fn pixels(&self) -> &[(usize, usize)] {
        &self.pixels
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// First pixel in row-major order.
    pub fn first(&self) -> (usize, usize) {
        self.pixels[0]
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.pixels.binary_search(&(row, col)).is_ok()
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.pixels.iter().all(|&(r, c)| r < height && c < width)
    }

    /// Row-major boolean grid of the region.
    pub fn to_mask(&self, width: usize, height: usize) -> Vec<bool> {
        let mut out = vec![false; width * height];
        for &(r, c) in &self.pixels {
            out[r * width + c] = true;
        }
        out
    }
}

/// Arithmetic mean of the map over `region`.
///
/// The sum runs in row-major order as deviations from the first pixel, so the
/// result does not depend on how the region was enumerated and a constant
/// region returns its constant exactly. The result is clamped to the region's
/// value range to absorb rounding.
pub fn region_mean(map: &ScoreMap, region: &PixelRegion) -> Result<f64> {
    if region.is_empty() {
        return Err(Error::EmptyRegion);
    }
    if let Some(&(row, col)) = region
        .pixels()
        .iter()
        .find(|&&(r, c)| r >= map.height() || c >= map.width())
    {
        return Err(Error::OutOfBounds {
            row,
            col,
            width: map.width(),
            height: map.height(),
        });
    }
    let (r0, c0) = region.first();
    let pivot = map.get(r0, c0);
    let mut lo = pivot;
    let mut hi = pivot;
    let mut dev = 0.0f64;
    for &(r, c) in region.pixels() {
        let v = map.get(r, c);
        lo = lo.min(v);
        hi = hi.max(v);
        dev += v - pivot;
    }
    let mean = pivot + dev / region.len() as f64;
    Ok(mean.clamp(lo, hi))
}
