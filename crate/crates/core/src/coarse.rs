//! Coarse anomaly scoring from mask-classification query outputs, the
//! confidence-gated refinement mask, and ingestion of externally produced
//! coarse maps.
//!
//! Every query contributes `softmax(class_logits)_z * sigmoid(mask_logit(x))`
//! to the per-pixel class score `S_z(x)`; contributions from all queries are
//! summed. The anomaly score is `1 - max_z S_z(x)` over the known classes,
//! clamped to `[0, 1]`. The trailing "no-object" class takes part in the
//! softmax but never in the max or in the refinement gate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::score_map::{clamp01, clamp_unit, ScoreMap};

pub const DEFAULT_CONF_THRESHOLD: f64 = 0.95;
pub const DEFAULT_MASK_THRESHOLD: f64 = 0.5;

/// Per-query class and mask logits of a mask-classification model.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutputs {
    num_known_classes: usize,
    class_logits: Vec<Vec<f64>>,
    mask_logits: Vec<ScoreMap>,
    things_or_road: Vec<bool>,
}

impl QueryOutputs {
    /// `class_logits[q]` holds `num_known_classes + 1` entries, the last one
    /// being the no-object slot. `things_or_road[z]` flags known class `z` as
    /// eligible for the refinement gate.
    pub fn new(
        num_known_classes: usize,
        class_logits: Vec<Vec<f64>>,
        mask_logits: Vec<ScoreMap>,
        things_or_road: Vec<bool>,
    ) -> Result<Self> {
        if num_known_classes == 0 {
            return Err(Error::Dimension("at least one known class required".into()));
        }
        if class_logits.is_empty() {
            return Err(Error::Dimension("at least one query required".into()));
        }
        if class_logits.len() != mask_logits.len() {
            return Err(Error::Dimension(format!(
                "{} class-logit rows but {} mask grids",
                class_logits.len(),
                mask_logits.len()
            )));
        }
        if things_or_road.len() != num_known_classes {
            return Err(Error::Dimension(format!(
                "things_or_road has {} flags for {} known classes",
                things_or_road.len(),
                num_known_classes
            )));
        }
        for (q, row) in class_logits.iter().enumerate() {
            if row.len() != num_known_classes + 1 {
                return Err(Error::Dimension(format!(
                    "query {q}: expected {} class logits, got {}",
                    num_known_classes + 1,
                    row.len()
                )));
            }
        }
        let dims = mask_logits[0].dims();
        if let Some((q, m)) = mask_logits.iter().enumerate().find(|(_, m)| m.dims() != dims) {
            return Err(Error::Dimension(format!(
                "query {q}: mask grid {}x{} differs from {}x{}",
                m.width(),
                m.height(),
                dims.0,
                dims.1
            )));
        }
        Ok(Self {
            num_known_classes,
            class_logits,
            mask_logits,
            things_or_road,
        })
    }

    pub fn num_queries(&self) -> usize {
        self.class_logits.len()
    }

    pub fn num_known_classes(&self) -> usize {
        self.num_known_classes
    }

    pub fn class_logits(&self) -> &[Vec<f64>] {
        &self.class_logits
    }

    pub fn mask_logits(&self) -> &[ScoreMap] {
        &self.mask_logits
    }

    pub fn things_or_road(&self) -> &[bool] {
        &self.things_or_road
    }

    pub fn dims(&self) -> (usize, usize) {
        self.mask_logits[0].dims()
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Numeric("softmax of an empty list".into()));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite logit {v}")));
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Logistic function; saturates cleanly at `±inf`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn class_probabilities(q: &QueryOutputs) -> Result<Vec<Vec<f64>>> {
    q.class_logits.iter().map(|row| softmax(row)).collect()
}

/// Per-pixel class scores before the max is taken.
fn class_scores(q: &QueryOutputs) -> Result<Vec<Vec<f64>>> {
    let probs = class_probabilities(q)?;
    let z = q.num_known_classes;
    let n = q.mask_logits[0].len();
    let mut scores = vec![vec![0.0f64; z]; n];
    for (p, grid) in probs.iter().zip(&q.mask_logits) {
        for (px, &logit) in grid.values().iter().enumerate() {
            let s = sigmoid(logit);
            for (acc, &w) in scores[px].iter_mut().zip(&p[..z]) {
                *acc += w * s;
            }
        }
    }
    Ok(scores)
}

/// Anomaly map before the final clamp. Useful to check single-query inputs,
/// where the value is already inside `[0, 1]`.
pub fn coarse_map_unclamped(q: &QueryOutputs) -> Result<ScoreMap> {
    let (w, h) = q.dims();
    let scores = class_scores(q)?;
    let values = scores
        .iter()
        .map(|s| 1.0 - s.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    ScoreMap::from_vec(w, h, values)
}

/// Coarse anomaly map `f(x) = 1 - max_z S_z(x)`, clamped to `[0, 1]`.
pub fn coarse_map_from_queries(q: &QueryOutputs) -> Result<ScoreMap> {
    Ok(clamp_unit(&coarse_map_unclamped(q)?))
}

/// Whether a query passes the class-confidence gate: its most likely known
/// class is flagged in `things_or_road` and that probability exceeds
/// `conf_threshold`.
pub fn query_passes_gate(probs: &[f64], things_or_road: &[bool], conf_threshold: f64) -> bool {
    let z = things_or_road.len();
    let (best, &p) = probs[..z]
        .iter()
        .enumerate()
        .fold((0, &f64::NEG_INFINITY), |acc, (i, p)| {
            if *p > *acc.1 {
                (i, p)
            } else {
                acc
            }
        });
    things_or_road[best] && p > conf_threshold
}

/// Binary refinement mask: 1 where some gated query's mask sigmoid reaches
/// `mask_threshold`, 0 elsewhere.
pub fn refinement_mask(
    q: &QueryOutputs,
    conf_threshold: f64,
    mask_threshold: f64,
) -> Result<ScoreMap> {
    for (name, t) in [("conf_threshold", conf_threshold), ("mask_threshold", mask_threshold)] {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::Config(format!("{name} must lie in (0, 1), got {t}")));
        }
    }
    let probs = class_probabilities(q)?;
    let (w, h) = q.dims();
    let mut out = vec![0.0f64; w * h];
    for (p, grid) in probs.iter().zip(&q.mask_logits) {
        if !query_passes_gate(p, &q.things_or_road, conf_threshold) {
            continue;
        }
        for (o, &logit) in out.iter_mut().zip(grid.values()) {
            if sigmoid(logit) >= mask_threshold {
                *o = 1.0;
            }
        }
    }
    ScoreMap::from_vec(w, h, out)
}

/// Element-wise gating `f_r = r * f`, clamped to `[0, 1]`.
pub fn apply_refinement(f: &ScoreMap, r: &ScoreMap) -> Result<ScoreMap> {
    f.ensure_same_dims(r)?;
    let values = f
        .values()
        .iter()
        .zip(r.values())
        .map(|(&a, &b)| clamp01(a * b))
        .collect();
    ScoreMap::from_vec(f.width(), f.height(), values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoarseSource {
    ExternalFile,
    QueryScoring,
    Synthetic,
}

/// An initial anomaly map handed to the refinement stages.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseInput {
    pub source: CoarseSource,
    pub map: ScoreMap,
    pub provenance_note: String,
}

/// Wraps an externally produced map; values are only clamped.
pub fn ingest_coarse(map: &ScoreMap, source_note: &str) -> CoarseInput {
    ingest_coarse_from(map, CoarseSource::ExternalFile, source_note)
}

pub fn ingest_coarse_from(map: &ScoreMap, source: CoarseSource, source_note: &str) -> CoarseInput {
    CoarseInput {
        source,
        map: clamp_unit(map),
        provenance_note: source_note.to_string(),
    }
}
