//! Objectness-aware score calibration.
//!
//! Each instance mask has its pixels replaced by the mean initial score over
//! the mask. Masks are applied in a fixed priority order; where masks
//! overlap, the mask applied later wins. Means are always taken over the
//! initial map, never over a partially calibrated one.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::score_map::{region_mean, PixelRegion, ScoreMap};

/// A class-agnostic binary object mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceMask {
    pub id: i64,
    pub region: PixelRegion,
}

impl InstanceMask {
    pub fn new(id: i64, region: PixelRegion) -> Self {
        Self { id, region }
    }

    pub fn area(&self) -> usize {
        self.region.len()
    }

    /// Row-major index of the first pixel, used for tie-breaking.
    fn first_index(&self, width: usize) -> usize {
        let (r, c) = self.region.first();
        r * width + c
    }
}

/// Instance masks for one `width x height` image. Masks may overlap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSet {
    width: usize,
    height: usize,
    masks: Vec<InstanceMask>,
}

impl MaskSet {
    pub fn new(width: usize, height: usize, masks: Vec<InstanceMask>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "mask set must be at least 1x1, got {width}x{height}"
            )));
        }
        let mut ids: Vec<i64> = masks.iter().map(|m| m.id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("duplicate mask id {}", w[0])));
        }
        for m in &masks {
            if let Some(&(row, col)) = m
                .region
                .pixels()
                .iter()
                .find(|&&(r, c)| r >= height || c >= width)
            {
                return Err(Error::OutOfBounds {
                    row,
                    col,
                    width,
                    height,
                });
            }
        }
        Ok(Self {
            width,
            height,
            masks,
        })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, Vec::new())
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

    pub fn masks(&self) -> &[InstanceMask] {
        &self.masks
    }

    pub fn into_masks(self) -> Vec<InstanceMask> {
        self.masks
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskOrder {
    /// Largest masks first, so smaller masks overwrite them inside overlaps.
    #[default]
    DescendingArea,
    AscendingArea,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OascConfig {
    pub order: MaskOrder,
}

/// Masks in processing order. Ties on area are broken by the row-major index
/// of the first pixel, then by id, so the order is total and independent of
/// the input order.
pub fn prioritize<'a>(masks: &'a MaskSet, cfg: &OascConfig) -> Vec<&'a InstanceMask> {
    let width = masks.width;
    let mut ordered: Vec<&InstanceMask> = masks.masks.iter().collect();
    ordered.sort_by(|a, b| {
        let by_area = match cfg.order {
            MaskOrder::DescendingArea => b.area().cmp(&a.area()),
            MaskOrder::AscendingArea => a.area().cmp(&b.area()),
        };
        by_area
            .then_with(|| a.first_index(width).cmp(&b.first_index(width)))
            .then_with(|| a.id.cmp(&b.id))
            .then(Ordering::Equal)
    });
    ordered
}

/// Replaces the scores inside each mask by the mask's mean initial score.
/// Pixels covered by no mask keep their initial value.
pub fn calibrate(init: &ScoreMap, masks: &MaskSet, cfg: &OascConfig) -> Result<ScoreMap> {
    if init.dims() != masks.dims() {
        return Err(Error::Dimension(format!(
            "score map is {}x{}, masks are {}x{}",
            init.width(),
            init.height(),
            masks.width,
            masks.height
        )));
    }
    let ordered = prioritize(masks, cfg);
    let alphas = ordered
        .iter()
        .map(|m| region_mean(init, &m.region))
        .collect::<Result<Vec<f64>>>()?;
    let mut out = init.clone();
    for (mask, alpha) in ordered.iter().zip(alphas) {
        for &(r, c) in mask.region.pixels() {
            out.set(r, c, alpha);
        }
    }
    Ok(out)
}
