//! RLE-JSON mask documents.
//!
//! `{"width": W, "height": H, "masks": [{"id": int, "rle": [int, ...]}]}`
//!
//! `rle` alternates runs of 0s and 1s over the row-major pixels, always
//! starting with a (possibly empty) run of 0s, and sums to `W * H`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::FormatError;
use crate::oasc::{InstanceMask, MaskSet};
use crate::score_map::PixelRegion;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskDocument {
    width: i64,
    height: i64,
    masks: Vec<MaskEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskEntry {
    id: i64,
    rle: Vec<i64>,
}

/// Run lengths of a row-major boolean grid, starting with the 0-run.
pub fn encode_rle(mask: &[bool]) -> Vec<u64> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0u64;
    for &b in mask {
        if b == current {
            len += 1;
        } else {
            runs.push(len);
            current = b;
            len = 1;
        }
    }
    runs.push(len);
    runs
}

pub fn decode_rle(runs: &[i64], width: usize, height: usize) -> Result<Vec<bool>, String> {
    let total = width * height;
    let mut out = Vec::new();
    for (i, &run) in runs.iter().enumerate() {
        if run < 0 {
            return Err(format!("run {i} is negative ({run})"));
        }
        let run = run as usize;
        if out.len() + run > total {
            return Err(format!("runs exceed {total} pixels at run {i}"));
        }
        out.resize(out.len() + run, i % 2 == 1);
    }
    if out.len() != total {
        return Err(format!("runs sum to {}, expected {total}", out.len()));
    }
    Ok(out)
}

pub fn decode_masks(text: &str) -> Result<MaskSet, FormatError> {
    let doc: MaskDocument = serde_json::from_str(text)?;
    let dim = |v: i64, name: &str| -> Result<usize, FormatError> {
        if v < 1 || v > u32::MAX as i64 {
            return Err(FormatError::Invalid(format!("{name} {v} out of range")));
        }
        Ok(v as usize)
    };
    let width = dim(doc.width, "width")?;
    let height = dim(doc.height, "height")?;
    width
        .checked_mul(height)
        .filter(|&n| n <= 1 << 28)
        .ok_or_else(|| FormatError::Invalid(format!("{width}x{height} is too large")))?;
    let mut seen = std::collections::BTreeSet::new();
    let mut masks = Vec::with_capacity(doc.masks.len());
    for entry in doc.masks {
        if !seen.insert(entry.id) {
            return Err(FormatError::Mask {
                id: entry.id,
                message: "duplicate id".into(),
            });
        }
        let grid = decode_rle(&entry.rle, width, height).map_err(|message| FormatError::Mask {
            id: entry.id,
            message,
        })?;
        let region = PixelRegion::from_mask(&grid, width).ok_or_else(|| FormatError::Mask {
            id: entry.id,
            message: "mask has zero area".into(),
        })?;
        masks.push(InstanceMask::new(entry.id, region));
    }
    MaskSet::new(width, height, masks).map_err(|e| FormatError::Invalid(e.to_string()))
}

pub fn encode_masks(set: &MaskSet) -> String {
    let (w, h) = set.dims();
    let doc = MaskDocument {
        width: w as i64,
        height: h as i64,
        masks: set
            .masks()
            .iter()
            .map(|m| MaskEntry {
                id: m.id,
                rle: encode_rle(&m.region.to_mask(w, h))
                    .into_iter()
                    .map(|r| r as i64)
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string(&doc).expect("mask document serializes")
}

/// Reads a mask document, whatever its dimensions.
pub fn read_mask_document(path: impl AsRef<Path>) -> Result<MaskSet, FormatError> {
    let bytes = super::read_bytes(path.as_ref())?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| FormatError::binary(e.valid_up_to(), "document is not UTF-8"))?;
    decode_masks(text)
}

/// Reads a mask document and checks it describes a `width x height` image.
pub fn read_masks(path: impl AsRef<Path>, width: usize, height: usize) -> Result<MaskSet, FormatError> {
    let set = read_mask_document(path)?;
    if set.dims() != (width, height) {
        return Err(FormatError::Invalid(format!(
            "masks are {}x{}, expected {width}x{height}",
            set.width(),
            set.height()
        )));
    }
    Ok(set)
}

pub fn write_masks(set: &MaskSet, path: impl AsRef<Path>) -> Result<(), FormatError> {
    super::write_bytes(path.as_ref(), encode_masks(set).as_bytes())
}
