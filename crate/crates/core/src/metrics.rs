//! Pixel-level (AuPRC, FPR95) and component-level (sIoU, PPV, F1) evaluation
//! of soft anomaly maps.
//!
//! Pixel metrics are rank based: they only depend on the ordering of scores
//! and on which scores tie. Component metrics binarize the prediction at each
//! threshold in `tau_bins` and match 8-connected components against the
//! ground-truth anomaly components.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::score_map::{PixelRegion, ScoreMap};

pub const DEFAULT_TAU_MATCH: f64 = 0.25;
pub const DEFAULT_TAU_BINS: [f64; 6] = [0.25, 0.35, 0.45, 0.55, 0.65, 0.75];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Id,
    Ood,
    Ignore,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    width: usize,
    height: usize,
    labels: Vec<Label>,
}

impl GroundTruth {
    pub fn new(width: usize, height: usize, labels: Vec<Label>) -> Result<Self> {
        if width == 0 || height == 0 || labels.len() != width * height {
            return Err(Error::Dimension(format!(
                "{width}x{height} ground truth with {} labels",
                labels.len()
            )));
        }
        if labels.iter().all(|&l| l == Label::Ignore) {
            return Err(Error::Config("ground truth has no evaluable pixel".into()));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
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

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> Label {
        self.labels[row * self.width + col]
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    fn check_dims(&self, pred: &ScoreMap) -> Result<()> {
        if pred.dims() != self.dims() {
            return Err(Error::Dimension(format!(
                "prediction is {}x{}, ground truth is {}x{}",
                pred.width(),
                pred.height(),
                self.width,
                self.height
            )));
        }
        Ok(())
    }
}

/// A non-IGNORE pixel: its score and whether it is anomalous.
pub type Sample = (f64, bool);

pub fn pixel_samples(pred: &ScoreMap, gt: &GroundTruth) -> Result<Vec<Sample>> {
    gt.check_dims(pred)?;
    Ok(pred
        .values()
        .iter()
        .zip(&gt.labels)
        .filter(|(_, &l)| l != Label::Ignore)
        .map(|(&s, &l)| (s, l == Label::Ood))
        .collect())
}

/// Cumulative (tp, fp) after each block of tied scores, highest score first.
fn operating_points(samples: &[Sample]) -> Vec<(usize, usize)> {
    let mut sorted: Vec<Sample> = samples.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let score = sorted[i].0;
        while i < sorted.len() && sorted[i].0.total_cmp(&score).is_eq() {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((tp, fp));
    }
    points
}

/// Step-wise average precision `sum (R_i - R_{i-1}) P_i`. `None` without
/// positives.
pub fn average_precision(samples: &[Sample]) -> Option<f64> {
    let positives = samples.iter().filter(|s| s.1).count();
    if positives == 0 {
        return None;
    }
    // sum of (new positives x precision), divided once by the positive count
    let mut weighted = 0.0;
    let mut prev_tp = 0usize;
    for (tp, fp) in operating_points(samples) {
        if tp > prev_tp {
            weighted += (tp - prev_tp) as f64 * (tp as f64 / (tp + fp) as f64);
            prev_tp = tp;
        }
    }
    Some(weighted / positives as f64)
}

/// False-positive rate at the first threshold whose true-positive rate
/// reaches 95%. `None` without positives or without negatives.
pub fn fpr_at_tpr95(samples: &[Sample]) -> Option<f64> {
    let positives = samples.iter().filter(|s| s.1).count();
    let negatives = samples.len() - positives;
    if positives == 0 || negatives == 0 {
        return None;
    }
    // tp / positives >= 0.95, in integers
    operating_points(samples)
        .into_iter()
        .find(|&(tp, _)| 20 * tp >= 19 * positives)
        .map(|(_, fp)| fp as f64 / negatives as f64)
}

pub fn auprc(pred: &ScoreMap, gt: &GroundTruth) -> Result<Option<f64>> {
    Ok(average_precision(&pixel_samples(pred, gt)?))
}

pub fn fpr_at_95_tpr(pred: &ScoreMap, gt: &GroundTruth) -> Result<Option<f64>> {
    Ok(fpr_at_tpr95(&pixel_samples(pred, gt)?))
}

/// 8-connected components, ordered by their first pixel in row-major order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ComponentSet {
    pub components: Vec<PixelRegion>,
}

impl ComponentSet {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

/// Labels 8-connected components of a row-major boolean grid. Returns the
/// per-pixel label (`0` for background, `k + 1` for component `k`) and the
/// component sizes.
pub fn label_components(mask: &[bool], width: usize, height: usize) -> (Vec<u32>, Vec<usize>) {
    let mut labels = vec![0u32; width * height];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || labels[start] != 0 {
            continue;
        }
        let id = sizes.len() as u32 + 1;
        labels[start] = id;
        stack.push(start);
        let mut size = 0;
        while let Some(p) = stack.pop() {
            size += 1;
            let (r, c) = ((p / width) as isize, (p % width) as isize);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (nr, nc) = (r + dr, c + dc);
                    if nr < 0 || nc < 0 || nr >= height as isize || nc >= width as isize {
                        continue;
                    }
                    let q = nr as usize * width + nc as usize;
                    if mask[q] && labels[q] == 0 {
                        labels[q] = id;
                        stack.push(q);
                    }
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Components of the pixels with value `>= 0.5`.
pub fn connected_components(binary: &ScoreMap) -> ComponentSet {
    let (w, h) = binary.dims();
    let mask: Vec<bool> = binary.values().iter().map(|&v| v >= 0.5).collect();
    let (labels, sizes) = label_components(&mask, w, h);
    let mut buckets: Vec<Vec<(usize, usize)>> = sizes.iter().map(|&s| Vec::with_capacity(s)).collect();
    for (i, &l) in labels.iter().enumerate() {
        if l > 0 {
            buckets[l as usize - 1].push((i / w, i % w));
        }
    }
    ComponentSet {
        components: buckets
            .into_iter()
            .map(|px| PixelRegion::new(px, w, h).expect("non-empty, in-bounds"))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub tau_bins: Vec<f64>,
    pub tau_match: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            tau_bins: DEFAULT_TAU_BINS.to_vec(),
            tau_match: DEFAULT_TAU_MATCH,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau_bins.is_empty() {
            return Err(Error::Config("tau_bins must not be empty".into()));
        }
        if let Some(t) = self.tau_bins.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(Error::Config(format!("tau bin {t} is outside (0, 1)")));
        }
        if !(0.0..=1.0).contains(&self.tau_match) {
            return Err(Error::Config(format!(
                "tau_match {} is outside [0, 1]",
                self.tau_match
            )));
        }
        Ok(())
    }
}

/// Component counts at one binarization threshold. The sums allow pooling
/// across images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdStats {
    pub tau: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub f1: f64,
    pub siou_sum: f64,
    pub n_gt: usize,
    pub ppv_sum: f64,
    pub n_pred: usize,
}

impl ThresholdStats {
    fn f1_of(tp: usize, fp: usize, fn_: usize) -> f64 {
        let denom = 2 * tp + fn_ + fp;
        if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub mean_f1: f64,
    pub siou_gt: f64,
    pub ppv: Option<f64>,
    pub per_threshold: Vec<ThresholdStats>,
}

fn summarize(per_threshold: Vec<ThresholdStats>) -> ComponentReport {
    let mean_f1 = per_threshold.iter().map(|t| t.f1).sum::<f64>() / per_threshold.len() as f64;
    let best = per_threshold
        .iter()
        .fold(&per_threshold[0], |b, t| if t.f1 > b.f1 { t } else { b });
    let siou_gt = best.siou_sum / best.n_gt as f64;
    let ppv = (best.n_pred > 0).then(|| best.ppv_sum / best.n_pred as f64);
    ComponentReport {
        mean_f1,
        siou_gt,
        ppv,
        per_threshold,
    }
}

/// Component-level metrics. `None` when the ground truth has no anomalous
/// component.
pub fn component_metrics(
    pred: &ScoreMap,
    gt: &GroundTruth,
    cfg: &EvalConfig,
) -> Result<Option<ComponentReport>> {
    gt.check_dims(pred)?;
    cfg.validate()?;
    let (w, h) = gt.dims();
    let gt_mask: Vec<bool> = gt.labels.iter().map(|&l| l == Label::Ood).collect();
    let (gt_labels, gt_sizes) = label_components(&gt_mask, w, h);
    if gt_sizes.is_empty() {
        return Ok(None);
    }

    let mut per_threshold = Vec::with_capacity(cfg.tau_bins.len());
    for &tau in &cfg.tau_bins {
        let pred_mask: Vec<bool> = pred
            .values()
            .iter()
            .zip(&gt.labels)
            .map(|(&s, &l)| l != Label::Ignore && s >= tau)
            .collect();
        let (pred_labels, pred_sizes) = label_components(&pred_mask, w, h);

        // pairwise overlaps between gt and predicted components
        let mut touching_pred: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); gt_sizes.len()];
        let mut gt_hits = vec![0usize; gt_sizes.len()];
        let mut pred_hits = vec![0usize; pred_sizes.len()];
        for (&g, &p) in gt_labels.iter().zip(&pred_labels) {
            if g > 0 && p > 0 {
                touching_pred[g as usize - 1].insert(p);
                gt_hits[g as usize - 1] += 1;
                pred_hits[p as usize - 1] += 1;
            }
        }

        let mut tp = 0;
        let mut siou_sum = 0.0;
        for (k, touching) in touching_pred.iter().enumerate() {
            let inter = gt_hits[k];
            let union_size: usize = touching.iter().map(|&p| pred_sizes[p as usize - 1]).sum();
            let union = gt_sizes[k] + union_size - inter;
            let siou = inter as f64 / union as f64;
            siou_sum += siou;
            if siou > cfg.tau_match {
                tp += 1;
            }
        }
        let fn_ = gt_sizes.len() - tp;

        let mut fp = 0;
        let mut ppv_sum = 0.0;
        for (p, &size) in pred_sizes.iter().enumerate() {
            let ppv = pred_hits[p] as f64 / size as f64;
            ppv_sum += ppv;
            if ppv <= cfg.tau_match {
                fp += 1;
            }
        }

        per_threshold.push(ThresholdStats {
            tau,
            tp,
            fp,
            fn_,
            f1: ThresholdStats::f1_of(tp, fp, fn_),
            siou_sum,
            n_gt: gt_sizes.len(),
            ppv_sum,
            n_pred: pred_sizes.len(),
        });
    }
    Ok(Some(summarize(per_threshold)))
}

/// Per-image or aggregated evaluation result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub auprc: Option<f64>,
    pub fpr95: Option<f64>,
    pub mean_f1: Option<f64>,
    pub siou_gt: Option<f64>,
    pub ppv: Option<f64>,
    pub per_threshold: Vec<ThresholdStats>,
    pub n_pos: usize,
    pub n_neg: usize,
    /// Images pooled into this report.
    pub n_images: usize,
    /// Pooled images whose own pixel metrics were undefined.
    pub n_pixel_undefined: usize,
    /// Pooled images without any ground-truth component.
    pub n_component_undefined: usize,
    #[serde(skip)]
    pub samples: Vec<Sample>,
}

pub fn evaluate(pred: &ScoreMap, gt: &GroundTruth, cfg: &EvalConfig) -> Result<MetricReport> {
    let samples = pixel_samples(pred, gt)?;
    let comp = component_metrics(pred, gt, cfg)?;
    let n_pos = samples.iter().filter(|s| s.1).count();
    let n_neg = samples.len() - n_pos;
    let auprc = average_precision(&samples);
    let fpr95 = fpr_at_tpr95(&samples);
    Ok(MetricReport {
        auprc,
        fpr95,
        mean_f1: comp.as_ref().map(|c| c.mean_f1),
        siou_gt: comp.as_ref().map(|c| c.siou_gt),
        ppv: comp.as_ref().and_then(|c| c.ppv),
        per_threshold: comp.map(|c| c.per_threshold).unwrap_or_default(),
        n_pos,
        n_neg,
        n_images: 1,
        n_pixel_undefined: usize::from(auprc.is_none() || fpr95.is_none()),
        n_component_undefined: usize::from(n_pos == 0),
        samples,
    })
}

/// Pools several reports: pixel metrics over the concatenated pixel
/// population, component metrics over summed component counts.
pub fn aggregate(reports: &[MetricReport]) -> Result<MetricReport> {
    if reports.is_empty() {
        return Err(Error::Config("nothing to aggregate".into()));
    }
    let samples: Vec<Sample> = reports.iter().flat_map(|r| r.samples.iter().copied()).collect();
    let n_pos = samples.iter().filter(|s| s.1).count();
    let n_neg = samples.len() - n_pos;

    let defined: Vec<&MetricReport> = reports.iter().filter(|r| !r.per_threshold.is_empty()).collect();
    let mut pooled: Option<Vec<ThresholdStats>> = None;
    for r in &defined {
        match pooled.as_mut() {
            None => pooled = Some(r.per_threshold.clone()),
            Some(acc) => {
                if acc.len() != r.per_threshold.len()
                    || acc.iter().zip(&r.per_threshold).any(|(a, b)| a.tau != b.tau)
                {
                    return Err(Error::Config("reports use different tau bins".into()));
                }
                for (a, b) in acc.iter_mut().zip(&r.per_threshold) {
                    a.tp += b.tp;
                    a.fp += b.fp;
                    a.fn_ += b.fn_;
                    a.siou_sum += b.siou_sum;
                    a.n_gt += b.n_gt;
                    a.ppv_sum += b.ppv_sum;
                    a.n_pred += b.n_pred;
                }
            }
        }
    }
    let comp = pooled.map(|mut stats| {
        for s in &mut stats {
            s.f1 = ThresholdStats::f1_of(s.tp, s.fp, s.fn_);
        }
        summarize(stats)
    });

    let auprc = average_precision(&samples);
    let fpr95 = fpr_at_tpr95(&samples);
    if auprc.is_none() && comp.is_none() {
        log::warn!(
            "aggregate over {} images has no anomalous pixel; all metrics undefined",
            reports.len()
        );
    }
    Ok(MetricReport {
        auprc,
        fpr95,
        mean_f1: comp.as_ref().map(|c| c.mean_f1),
        siou_gt: comp.as_ref().map(|c| c.siou_gt),
        ppv: comp.as_ref().and_then(|c| c.ppv),
        per_threshold: comp.map(|c| c.per_threshold).unwrap_or_default(),
        n_pos,
        n_neg,
        n_images: reports.iter().map(|r| r.n_images).sum(),
        n_pixel_undefined: reports.iter().map(|r| r.n_pixel_undefined).sum(),
        n_component_undefined: reports.iter().map(|r| r.n_component_undefined).sum(),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gt_row(labels: &[Label]) -> GroundTruth {
        GroundTruth::new(labels.len(), 1, labels.to_vec()).unwrap()
    }

    fn row(vals: &[f64]) -> ScoreMap {
        ScoreMap::from_vec(vals.len(), 1, vals.to_vec()).unwrap()
    }

    use Label::{Id, Ignore, Ood};

    /// Brute force: sweep every candidate threshold and integrate the
    /// precision-recall steps directly.
    fn brute_ap(scores: &[f64], pos: &[bool]) -> f64 {
        let mut ts: Vec<f64> = scores.to_vec();
        ts.sort_by(|a, b| b.partial_cmp(a).unwrap());
        ts.dedup();
        let p = pos.iter().filter(|&&b| b).count() as f64;
        let (mut ap, mut prev_r) = (0.0, 0.0);
        for t in ts {
            let tp = scores.iter().zip(pos).filter(|(s, &b)| **s >= t && b).count() as f64;
            let k = scores.iter().filter(|s| **s >= t).count() as f64;
            let r = tp / p;
            ap += (r - prev_r) * (tp / k);
            prev_r = r;
        }
        ap
    }

    fn brute_fpr95(scores: &[f64], pos: &[bool]) -> f64 {
        let p = pos.iter().filter(|&&b| b).count() as f64;
        let n = pos.len() as f64 - p;
        let mut ts: Vec<f64> = scores.to_vec();
        ts.push(f64::NEG_INFINITY);
        ts.iter()
            .filter_map(|&t| {
                let tp = scores.iter().zip(pos).filter(|(s, &b)| **s >= t && b).count() as f64;
                let fp = scores.iter().zip(pos).filter(|(s, &b)| **s >= t && !b).count() as f64;
                (tp / p >= 0.95).then_some(fp / n)
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn four_pixel_fixture() {
        let pred = row(&[0.9, 0.8, 0.4, 0.1]);
        let gt = gt_row(&[Ood, Id, Ood, Id]);
        let ap = auprc(&pred, &gt).unwrap().unwrap();
        let oracle = brute_ap(&[0.9, 0.8, 0.4, 0.1], &[true, false, true, false]);
        assert!((oracle - 5.0 / 6.0).abs() < 1e-12);
        assert!((ap - 5.0 / 6.0).abs() < 1e-9);
        assert_eq!(fpr_at_95_tpr(&pred, &gt).unwrap(), Some(0.5));
    }

    #[test]
    fn perfect_and_degenerate_scores() {
        let gt = gt_row(&[Ood, Id, Id, Ood]);
        let pred = row(&[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(auprc(&pred, &gt).unwrap(), Some(1.0));
        assert_eq!(fpr_at_95_tpr(&pred, &gt).unwrap(), Some(0.0));
        let flat = row(&[0.3; 4]);
        assert_eq!(fpr_at_95_tpr(&flat, &gt).unwrap(), Some(1.0));
    }

    #[test]
    fn single_positive_among_ignore() {
        let gt = gt_row(&[Ignore, Ood, Ignore]);
        let pred = row(&[0.1, 0.7, 0.9]);
        assert_eq!(auprc(&pred, &gt).unwrap(), Some(1.0));
        assert_eq!(fpr_at_95_tpr(&pred, &gt).unwrap(), None);
    }

    #[test]
    fn undefined_without_positives() {
        let gt = gt_row(&[Id, Id]);
        assert_eq!(auprc(&row(&[0.2, 0.5]), &gt).unwrap(), None);
        assert!(GroundTruth::new(2, 1, vec![Ignore, Ignore]).is_err());
    }

    #[test]
    fn components_connectivity() {
        let m = ScoreMap::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(connected_components(&m).len(), 1);
        let empty = ScoreMap::new_filled(3, 3, 0.0).unwrap();
        assert!(connected_components(&empty).is_empty());
        let checker = ScoreMap::from_fn(3, 3, |r, c| ((r + c) % 2 == 0) as u8 as f64).unwrap();
        let cs = connected_components(&checker);
        assert_eq!(cs.len(), 1);
        assert_eq!(cs.components[0].len(), 5);
        let two = ScoreMap::from_vec(4, 1, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let cs = connected_components(&two);
        assert_eq!(cs.len(), 2);
        assert_eq!(cs.components[0].first(), (0, 0));
        assert_eq!(cs.components[1].first(), (0, 3));
    }

    fn blob_gt(w: usize, h: usize, cells: &[(usize, usize)]) -> GroundTruth {
        let mut labels = vec![Id; w * h];
        for &(r, c) in cells {
            labels[r * w + c] = Ood;
        }
        GroundTruth::new(w, h, labels).unwrap()
    }

    #[test]
    fn component_exact_match() {
        let cells = [(1, 1), (1, 2), (2, 1), (2, 2)];
        let gt = blob_gt(6, 6, &cells);
        let pred = ScoreMap::from_fn(6, 6, |r, c| cells.contains(&(r, c)) as u8 as f64).unwrap();
        let rep = component_metrics(&pred, &gt, &EvalConfig::default()).unwrap().unwrap();
        assert_eq!(rep.mean_f1, 1.0);
        assert_eq!(rep.siou_gt, 1.0);
        assert_eq!(rep.ppv, Some(1.0));
        assert!(rep.per_threshold.iter().all(|t| t.f1 == 1.0));
    }

    #[test]
    fn component_shifted_blob() {
        let cells = [(1, 1), (1, 2), (2, 1), (2, 2)];
        let gt = blob_gt(6, 6, &cells);
        let pred = ScoreMap::from_fn(6, 6, |r, c| {
            cells.contains(&(r, c.wrapping_sub(1))) as u8 as f64
        })
        .unwrap();
        let rep = component_metrics(&pred, &gt, &EvalConfig::default()).unwrap().unwrap();
        let t = &rep.per_threshold[0];
        assert!((t.siou_sum - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!((t.tp, t.fp, t.fn_), (1, 0, 0));
        assert_eq!(rep.ppv, Some(0.5));
        assert_eq!(rep.mean_f1, 1.0);
    }

    #[test]
    fn component_total_miss() {
        let gt = blob_gt(5, 5, &[(2, 2)]);
        let pred = ScoreMap::new_filled(5, 5, 0.0).unwrap();
        let rep = component_metrics(&pred, &gt, &EvalConfig::default()).unwrap().unwrap();
        let t = &rep.per_threshold[0];
        assert_eq!((t.tp, t.fp, t.fn_), (0, 0, 1));
        assert_eq!(rep.mean_f1, 0.0);
        assert_eq!(rep.ppv, None);
    }

    #[test]
    fn component_false_positive_blob() {
        let gt = blob_gt(8, 3, &[(1, 1)]);
        let pred = ScoreMap::from_fn(8, 3, |r, c| ((r == 1 && c == 1) || c >= 5) as u8 as f64).unwrap();
        let rep = component_metrics(&pred, &gt, &EvalConfig::default()).unwrap().unwrap();
        let t = &rep.per_threshold[0];
        assert_eq!((t.tp, t.fp, t.fn_), (1, 1, 0));
        assert!((t.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn no_gt_components_is_undefined() {
        let gt = gt_row(&[Id, Id, Ignore]);
        assert_eq!(
            component_metrics(&row(&[0.9, 0.1, 0.5]), &gt, &EvalConfig::default()).unwrap(),
            None
        );
    }

    #[test]
    fn aggregate_examples() {
        let cfg = EvalConfig::default();
        let gt = blob_gt(4, 4, &[(1, 1), (1, 2)]);
        let is_pos = |r: usize, c: usize| r == 1 && (c == 1 || c == 2);
        let good = ScoreMap::from_fn(4, 4, |r, c| if is_pos(r, c) { 0.95 } else { 0.05 }).unwrap();
        let r1 = evaluate(&good, &gt, &cfg).unwrap();
        let agg = aggregate(std::slice::from_ref(&r1)).unwrap();
        assert_eq!(agg, r1);

        let bad = ScoreMap::from_fn(4, 4, |r, c| if is_pos(r, c) { 0.2 } else { 0.9 }).unwrap();
        let r2 = evaluate(&bad, &gt, &cfg).unwrap();
        let agg = aggregate(&[r1.clone(), r2.clone()]).unwrap();
        let (a1, a2, a) = (r1.auprc.unwrap(), r2.auprc.unwrap(), agg.auprc.unwrap());
        assert!(a2 < a && a < a1, "{a2} < {a} < {a1}");
        assert_eq!(agg.n_images, 2);
    }

    #[test]
    fn pooled_differs_from_image_mean() {
        let cfg = EvalConfig::default();
        let gt1 = gt_row(&[Ood, Id, Id]);
        let p1 = row(&[0.5, 0.4, 0.1]);
        let gt2 = gt_row(&[Ood, Id, Ood]);
        let p2 = row(&[0.95, 0.9, 0.2]);
        let r1 = evaluate(&p1, &gt1, &cfg).unwrap();
        let r2 = evaluate(&p2, &gt2, &cfg).unwrap();
        let pooled = aggregate(&[r1.clone(), r2.clone()]).unwrap().auprc.unwrap();
        let mean = (r1.auprc.unwrap() + r2.auprc.unwrap()) / 2.0;
        let oracle = brute_ap(
            &[0.5, 0.4, 0.1, 0.95, 0.9, 0.2],
            &[true, false, false, true, false, true],
        );
        assert!((pooled - oracle).abs() < 1e-12);
        assert!((pooled - mean).abs() > 1e-3);
    }

    fn arb_instance() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (2usize..40).prop_flat_map(|n| {
            (
                proptest::collection::vec((0u32..1000).prop_map(|k| k as f64 / 1000.0), n),
                proptest::collection::vec(any::<bool>(), n),
            )
        })
    }

    proptest! {
        #[test]
        fn ap_and_fpr_match_brute_force((scores, pos) in arb_instance()) {
            let samples: Vec<Sample> = scores.iter().copied().zip(pos.iter().copied()).collect();
            let p = pos.iter().filter(|&&b| b).count();
            if p > 0 {
                let ap = average_precision(&samples).unwrap();
                prop_assert!((ap - brute_ap(&scores, &pos)).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(&ap));
                if p < pos.len() {
                    prop_assert_eq!(fpr_at_tpr95(&samples).unwrap(), brute_fpr95(&scores, &pos));
                }
            }
        }

        #[test]
        fn perfect_iff_separated((scores, pos) in arb_instance()) {
            let samples: Vec<Sample> = scores.iter().copied().zip(pos.iter().copied()).collect();
            let min_pos = samples.iter().filter(|s| s.1).map(|s| s.0).fold(f64::INFINITY, f64::min);
            let max_neg = samples.iter().filter(|s| !s.1).map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
            if let (Some(ap), Some(fpr)) = (average_precision(&samples), fpr_at_tpr95(&samples)) {
                prop_assert_eq!(ap == 1.0, min_pos > max_neg);
                // fpr95 can be 0 with a few low positives below negatives, so only one direction holds
                if min_pos > max_neg {
                    prop_assert_eq!(fpr, 0.0);
                }
            }
        }

        #[test]
        fn component_rates_in_unit_range(vals in proptest::collection::vec(0.0f64..1.0, 64), labs in proptest::collection::vec(0u8..3, 64)) {
            let labels: Vec<Label> = labs.iter().map(|l| [Id, Ood, Ignore][*l as usize]).collect();
            if let Ok(gt) = GroundTruth::new(8, 8, labels) {
                let pred = ScoreMap::from_vec(8, 8, vals).unwrap();
                if let Some(rep) = component_metrics(&pred, &gt, &EvalConfig::default()).unwrap() {
                    prop_assert!((0.0..=1.0).contains(&rep.mean_f1));
                    prop_assert!((0.0..=1.0).contains(&rep.siou_gt));
                    if let Some(p) = rep.ppv { prop_assert!((0.0..=1.0).contains(&p)); }
                    for t in &rep.per_threshold {
                        prop_assert_eq!(t.f1 == 1.0, t.fn_ == 0 && t.fp == 0);
                    }
                }
            }
        }

        #[test]
        fn components_partition_foreground(bits in proptest::collection::vec(any::<bool>(), 49)) {
            let m = ScoreMap::from_vec(7, 7, bits.iter().map(|&b| b as u8 as f64).collect()).unwrap();
            let cs = connected_components(&m);
            let mut covered = vec![0u8; 49];
            for comp in &cs.components {
                for &(r, c) in comp.pixels() { covered[r * 7 + c] += 1; }
            }
            for (i, &b) in bits.iter().enumerate() {
                prop_assert_eq!(covered[i], b as u8);
            }
        }
    }
}
