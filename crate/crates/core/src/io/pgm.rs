//! Ground truth as binary PGM (`P5`, maxval 255): 0 = in-distribution,
//! 255 = anomalous, 128 = ignore.

use std::path::Path;

use crate::error::FormatError;
use crate::metrics::{GroundTruth, Label};

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\n' | b'\r' | 0x0B | 0x0C => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, FormatError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(FormatError::binary(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse::<usize>()
            .ok()
            .filter(|&n| n <= u32::MAX as usize)
            .ok_or_else(|| FormatError::binary(start, format!("{what} out of range")))
    }
}

pub fn decode_gt_pgm(bytes: &[u8]) -> Result<GroundTruth, FormatError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(FormatError::binary(0, "expected P5 magic"));
    }
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(FormatError::binary(2, format!("zero dimension {width}x{height}")));
    }
    if maxval != 255 {
        return Err(FormatError::binary(maxval_at, format!("maxval {maxval}, expected 255")));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(FormatError::binary(cur.pos, "missing whitespace after maxval")),
    }
    let payload = &bytes[cur.pos..];
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| FormatError::binary(2, "dimensions overflow"))?;
    if payload.len() != expected {
        return Err(FormatError::Truncated {
            expected: cur.pos + expected,
            actual: bytes.len(),
        });
    }
    let labels = payload
        .iter()
        .enumerate()
        .map(|(i, &v)| match v {
            0 => Ok(Label::Id),
            255 => Ok(Label::Ood),
            128 => Ok(Label::Ignore),
            value => Err(FormatError::PgmValue {
                row: i / width,
                col: i % width,
                value,
            }),
        })
        .collect::<Result<Vec<_>, _>>()?;
    GroundTruth::new(width, height, labels).map_err(|e| FormatError::Invalid(e.to_string()))
}

pub fn encode_gt_pgm(gt: &GroundTruth) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", gt.width(), gt.height()).into_bytes();
    out.extend(gt.labels().iter().map(|l| match l {
        Label::Id => 0u8,
        Label::Ood => 255,
        Label::Ignore => 128,
    }));
    out
}

pub fn read_gt_pgm(path: impl AsRef<Path>) -> Result<GroundTruth, FormatError> {
    decode_gt_pgm(&super::read_bytes(path.as_ref())?)
}

pub fn write_gt_pgm(gt: &GroundTruth, path: impl AsRef<Path>) -> Result<(), FormatError> {
    super::write_bytes(path.as_ref(), &encode_gt_pgm(gt))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_with_comment() {
        let mut bytes = b"P5\n# made by hand\n3 1\n255\n".to_vec();
        bytes.extend([0, 255, 128]);
        let gt = decode_gt_pgm(&bytes).unwrap();
        assert_eq!(gt.labels(), &[Label::Id, Label::Ood, Label::Ignore]);
        assert_eq!(encode_gt_pgm(&gt), {
            let mut b = b"P5\n3 1\n255\n".to_vec();
            b.extend([0, 255, 128]);
            b
        });
    }

    #[test]
    fn bad_value_names_pixel() {
        let mut bytes = b"P5 2 2 255\n".to_vec();
        bytes.extend([0, 0, 0, 7]);
        match decode_gt_pgm(&bytes) {
            Err(FormatError::PgmValue { row: 1, col: 1, value: 7 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_errors() {
        assert!(decode_gt_pgm(b"P6 1 1 255\n\0").is_err());
        assert!(decode_gt_pgm(b"P5 1 1 65535\n\0\0").is_err());
        assert!(matches!(
            decode_gt_pgm(b"P5 2 2 255\n\0\0"),
            Err(FormatError::Truncated { .. })
        ));
        assert!(decode_gt_pgm(b"P5 1").is_err());
        // all-ignore has nothing to evaluate
        assert!(decode_gt_pgm(b"P5 1 1 255\n\x80").is_err());
    }
}
