//! QJSON query-output documents.
//!
//! ```json
//! {
//!   "width": 4, "height": 3,
//!   "num_known_classes": 2,
//!   "things_or_road": [true, false],
//!   "queries": [
//!     {"class_logits": [1.0, 0.5, -2.0], "mask_logits_b64": "<base64 FMAP>"},
//!     {"class_logits": [0.1, 2.0, 0.0], "mask_logits_file": "q1.fmap"}
//!   ]
//! }
//! ```
//!
//! Each query carries `num_known_classes + 1` class logits (the last is the
//! no-object slot) and exactly one of an embedded base64 FMAP or a sidecar
//! FMAP path, resolved relative to the document's directory.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::fmap::{decode_fmap, encode_fmap, read_fmap};
use crate::coarse::QueryOutputs;
use crate::error::FormatError;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryDocument {
    width: u32,
    height: u32,
    num_known_classes: u32,
    things_or_road: Vec<bool>,
    queries: Vec<QueryEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryEntry {
    class_logits: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask_logits_b64: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask_logits_file: Option<String>,
}

/// Parses a QJSON document; sidecar files resolve against `base_dir`.
pub fn decode_queries(text: &str, base_dir: Option<&Path>) -> Result<QueryOutputs, FormatError> {
    let doc: QueryDocument = serde_json::from_str(text)?;
    let dims = (doc.width as usize, doc.height as usize);
    let mut class_logits = Vec::with_capacity(doc.queries.len());
    let mut masks = Vec::with_capacity(doc.queries.len());
    for (i, q) in doc.queries.into_iter().enumerate() {
        let grid = match (q.mask_logits_b64, q.mask_logits_file) {
            (Some(b64), None) => {
                let bytes = STANDARD
                    .decode(b64.as_bytes())
                    .map_err(|e| FormatError::Invalid(format!("query {i}: bad base64: {e}")))?;
                decode_fmap(&bytes)?
            }
            (None, Some(file)) => {
                let path = base_dir.map(|d| d.join(&file)).unwrap_or_else(|| file.into());
                read_fmap(path)?
            }
            _ => {
                return Err(FormatError::Invalid(format!(
                    "query {i}: exactly one of mask_logits_b64 / mask_logits_file required"
                )))
            }
        };
        if grid.dims() != dims {
            return Err(FormatError::Invalid(format!(
                "query {i}: mask grid is {}x{}, document says {}x{}",
                grid.width(),
                grid.height(),
                dims.0,
                dims.1
            )));
        }
        class_logits.push(q.class_logits);
        masks.push(grid);
    }
    QueryOutputs::new(
        doc.num_known_classes as usize,
        class_logits,
        masks,
        doc.things_or_road,
    )
    .map_err(|e| FormatError::Invalid(e.to_string()))
}

/// Serializes with embedded base64 mask grids. Mask logits are narrowed to
/// `f32`, as in any FMAP.
pub fn encode_queries(q: &QueryOutputs) -> String {
    let (w, h) = q.dims();
    let doc = QueryDocument {
        width: w as u32,
        height: h as u32,
        num_known_classes: q.num_known_classes() as u32,
        things_or_road: q.things_or_road().to_vec(),
        queries: q
            .class_logits()
            .iter()
            .zip(q.mask_logits())
            .map(|(cl, m)| QueryEntry {
                class_logits: cl.clone(),
                mask_logits_b64: Some(STANDARD.encode(encode_fmap(m))),
                mask_logits_file: None,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("query document serializes")
}

pub fn read_queries(path: impl AsRef<Path>) -> Result<QueryOutputs, FormatError> {
    let path = path.as_ref();
    let bytes = super::read_bytes(path)?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| FormatError::binary(e.valid_up_to(), "document is not UTF-8"))?;
    decode_queries(text, path.parent())
}

pub fn write_queries(q: &QueryOutputs, path: impl AsRef<Path>) -> Result<(), FormatError> {
    super::write_bytes(path.as_ref(), encode_queries(q).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coarse::coarse_map_from_queries;
    use crate::score_map::ScoreMap;

    #[test]
    fn hand_example_through_qjson() {
        let q = QueryOutputs::new(
            2,
            vec![
                vec![0.9f64.ln(), 0.1f64.ln(), -69.0],
                vec![0.2f64.ln(), 0.8f64.ln(), -69.0],
            ],
            vec![
                ScoreMap::from_vec(1, 1, vec![4f64.ln()]).unwrap(),
                ScoreMap::from_vec(1, 1, vec![0.0]).unwrap(),
            ],
            vec![true, true],
        )
        .unwrap();
        let back = decode_queries(&encode_queries(&q), None).unwrap();
        let f = coarse_map_from_queries(&back).unwrap();
        // ln 4 narrowed to f32 moves the sigmoid by ~1e-8
        assert!((f.values()[0] - 0.18).abs() < 1e-6);
    }

    #[test]
    fn sidecar_file_resolution() {
        let dir = tempfile::tempdir().unwrap();
        let grid = ScoreMap::from_vec(2, 1, vec![3.0, -3.0]).unwrap();
        crate::io::write_fmap(&grid, dir.path().join("q0.fmap")).unwrap();
        let doc = r#"{"width":2,"height":1,"num_known_classes":1,"things_or_road":[true],
            "queries":[{"class_logits":[2.0,0.0],"mask_logits_file":"q0.fmap"}]}"#;
        std::fs::write(dir.path().join("q.json"), doc).unwrap();
        let q = read_queries(dir.path().join("q.json")).unwrap();
        assert_eq!(q.mask_logits()[0], grid);
    }

    #[test]
    fn schema_violations() {
        let both = r#"{"width":1,"height":1,"num_known_classes":1,"things_or_road":[true],
            "queries":[{"class_logits":[0.0,0.0],"mask_logits_b64":"","mask_logits_file":"x"}]}"#;
        assert!(matches!(decode_queries(both, None), Err(FormatError::Invalid(_))));
        let unknown = r#"{"width":1,"height":1,"num_known_classes":1,"things_or_road":[true],"queries":[],"extra":1}"#;
        assert!(matches!(decode_queries(unknown, None), Err(FormatError::Json(_))));
        let no_queries = r#"{"width":1,"height":1,"num_known_classes":1,"things_or_road":[true],"queries":[]}"#;
        assert!(matches!(decode_queries(no_queries, None), Err(FormatError::Invalid(_))));
    }
}
