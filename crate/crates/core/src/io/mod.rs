//! File formats: FMAP score maps, RLE-JSON mask sets, PGM ground truth,
//! QJSON query outputs and metric reports (JSON + CSV).

mod fmap;
mod pgm;
mod qjson;
mod report;
mod rle;

use std::path::Path;

use crate::error::FormatError;

pub use fmap::{decode_fmap, encode_fmap, read_fmap, write_fmap, FMAP_HEADER_LEN, FMAP_MAGIC, FMAP_VERSION};
pub use pgm::{decode_gt_pgm, encode_gt_pgm, read_gt_pgm, write_gt_pgm};
pub use qjson::{decode_queries, encode_queries, read_queries, write_queries};
pub use report::{metrics_csv, metrics_json, write_metrics, CSV_COLUMNS};
pub use rle::{
    decode_masks, decode_rle, encode_masks, encode_rle, read_mask_document, read_masks, write_masks,
};

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>, FormatError> {
    std::fs::read(path).map_err(|e| FormatError::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| FormatError::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| FormatError::io(path, e))
}
