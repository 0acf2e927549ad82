//! `FMAP` binary score maps.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "FMAP"
//! 4       2     version, u16 LE (= 1)
//! 6       4     width, u32 LE
//! 10      4     height, u32 LE
//! 14      4*W*H values, f32 LE, row-major
//! ```

use std::path::Path;

use crate::error::FormatError;
use crate::score_map::ScoreMap;

pub const FMAP_MAGIC: &[u8; 4] = b"FMAP";
pub const FMAP_VERSION: u16 = 1;
pub const FMAP_HEADER_LEN: usize = 14;

pub fn encode_fmap(map: &ScoreMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(FMAP_HEADER_LEN + 4 * map.len());
    out.extend_from_slice(FMAP_MAGIC);
    out.extend_from_slice(&FMAP_VERSION.to_le_bytes());
    out.extend_from_slice(&(map.width() as u32).to_le_bytes());
    out.extend_from_slice(&(map.height() as u32).to_le_bytes());
    for &v in map.values() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

fn u32_at(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap())
}

pub fn decode_fmap(bytes: &[u8]) -> Result<ScoreMap, FormatError> {
    if bytes.len() < FMAP_HEADER_LEN {
        return Err(FormatError::Truncated {
            expected: FMAP_HEADER_LEN,
            actual: bytes.len(),
        });
    }
    if &bytes[0..4] != FMAP_MAGIC {
        return Err(FormatError::binary(0, format!("bad magic {:02X?}", &bytes[0..4])));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FMAP_VERSION {
        return Err(FormatError::binary(4, format!("unsupported version {version}")));
    }
    let width = u32_at(bytes, 6) as usize;
    let height = u32_at(bytes, 10) as usize;
    if width == 0 {
        return Err(FormatError::binary(6, "width is zero"));
    }
    if height == 0 {
        return Err(FormatError::binary(10, "height is zero"));
    }
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(FMAP_HEADER_LEN))
        .ok_or_else(|| FormatError::binary(6, format!("{width}x{height} overflows")))?;
    if bytes.len() != expected {
        return Err(FormatError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    let values: Vec<f64> = bytes[FMAP_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let outside = values.iter().filter(|v| !(0.0..=1.0).contains(*v)).count();
    if outside > 0 {
        log::warn!("{outside} score(s) outside [0, 1]");
    }
    ScoreMap::from_vec(width, height, values).map_err(|e| FormatError::Invalid(e.to_string()))
}

pub fn read_fmap(path: impl AsRef<Path>) -> Result<ScoreMap, FormatError> {
    decode_fmap(&super::read_bytes(path.as_ref())?)
}

pub fn write_fmap(map: &ScoreMap, path: impl AsRef<Path>) -> Result<(), FormatError> {
    super::write_bytes(path.as_ref(), &encode_fmap(map))
}
