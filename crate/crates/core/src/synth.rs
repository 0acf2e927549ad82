//! Deterministic synthetic scenes: ground truth, oracle instance masks and
//! coarse anomaly maps carrying three corruption types (blurred boundaries,
//! inconsistent scores inside objects, background clutter).
//!
//! Randomness comes from ChaCha8 keyed by the 64-bit seed (little-endian in
//! key bytes 0..8, remaining key bytes zero). Independent concerns use
//! separate ChaCha streams, see [`Stream`]. Uniform reals take the top 53
//! bits of a `u64`; integers in `[lo, hi]` use `lo + x % (hi - lo + 1)`;
//! normals use Box-Muller with one pair of uniforms per sample.

use std::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mbp::gaussian_blur;
use crate::metrics::{label_components, GroundTruth, Label};
use crate::oasc::{InstanceMask, MaskSet};
use crate::score_map::{clamp01, PixelRegion, ScoreMap};

/// ChaCha stream ids.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Stream {
    Layout = 0,
    Corruption = 1,
    Dropout = 2,
    Spurious = 3,
}

pub struct SeededRng(ChaCha8Rng);

impl SeededRng {
    pub fn new(seed: u64, stream: Stream) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(stream as u64);
        Self(rng)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn range(&mut self, lo: i64, hi: i64) -> i64 {
        debug_assert!(lo <= hi);
        let span = (hi - lo) as u64 + 1;
        lo + (self.next_u64() % span) as i64
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Rectangle,
    Ellipse,
}

/// A rendered object: axis-aligned rectangle or ellipse around an integer
/// centre with integer semi-axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneObject {
    pub shape: Shape,
    pub center_row: i64,
    pub center_col: i64,
    pub semi_rows: i64,
    pub semi_cols: i64,
    pub ood: bool,
}

impl SceneObject {
    pub fn contains(&self, row: i64, col: i64) -> bool {
        let dr = row - self.center_row;
        let dc = col - self.center_col;
        match self.shape {
            Shape::Rectangle => dr.abs() <= self.semi_rows && dc.abs() <= self.semi_cols,
            Shape::Ellipse => {
                let (a, b) = (self.semi_cols, self.semi_rows);
                dc * dc * b * b + dr * dr * a * a <= a * a * b * b
            }
        }
    }

    fn bbox(&self, margin: i64) -> (i64, i64, i64, i64) {
        (
            self.center_row - self.semi_rows - margin,
            self.center_col - self.semi_cols - margin,
            self.center_row + self.semi_rows + margin,
            self.center_col + self.semi_cols + margin,
        )
    }

    fn overlaps(&self, other: &SceneObject, margin: i64) -> bool {
        let (r0, c0, r1, c1) = self.bbox(margin);
        let (s0, d0, s1, d1) = other.bbox(0);
        r0 <= s1 && s0 <= r1 && c0 <= d1 && d0 <= c1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub n_ood_objects: usize,
    pub n_id_distractors: usize,
    pub shapes: Vec<Shape>,
    /// Inclusive range of semi-axis lengths in pixels.
    pub min_semi_axis: usize,
    pub max_semi_axis: usize,
    /// Minimum empty gap between object bounding boxes.
    pub gap: usize,
    pub max_retries: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            width: 128,
            height: 128,
            n_ood_objects: 3,
            n_id_distractors: 5,
            shapes: vec![Shape::Rectangle, Shape::Ellipse],
            min_semi_axis: 4,
            max_semi_axis: 12,
            gap: 2,
            max_retries: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub gt: GroundTruth,
    pub masks: MaskSet,
    pub objects: Vec<SceneObject>,
}

/// Places and renders the objects of a scene. Anomalous objects are placed
/// first; every object, anomalous or not, gets one oracle mask whose id is
/// its placement index.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    if spec.width == 0 || spec.height == 0 {
        return Err(Error::Dimension("scene must be at least 1x1".into()));
    }
    if spec.shapes.is_empty() {
        return Err(Error::Config("shape palette is empty".into()));
    }
    if spec.min_semi_axis > spec.max_semi_axis {
        return Err(Error::Config("min_semi_axis exceeds max_semi_axis".into()));
    }
    let (w, h) = (spec.width as i64, spec.height as i64);
    let mut rng = SeededRng::new(spec.seed, Stream::Layout);
    let mut objects: Vec<SceneObject> = Vec::new();
    let total = spec.n_ood_objects + spec.n_id_distractors;
    for i in 0..total {
        let ood = i < spec.n_ood_objects;
        let mut placed = None;
        for _ in 0..spec.max_retries.max(1) {
            let shape = spec.shapes[rng.range(0, spec.shapes.len() as i64 - 1) as usize];
            let lo = spec.min_semi_axis as i64;
            let hi = spec.max_semi_axis as i64;
            let semi_rows = rng.range(lo, hi);
            let semi_cols = rng.range(lo, hi);
            if 2 * semi_rows + 1 > h || 2 * semi_cols + 1 > w {
                continue;
            }
            let center_row = rng.range(semi_rows, h - 1 - semi_rows);
            let center_col = rng.range(semi_cols, w - 1 - semi_cols);
            let cand = SceneObject {
                shape,
                center_row,
                center_col,
                semi_rows,
                semi_cols,
                ood,
            };
            if objects.iter().all(|o| !cand.overlaps(o, spec.gap as i64)) {
                placed = Some(cand);
                break;
            }
        }
        match placed {
            Some(o) => objects.push(o),
            None => {
                return Err(Error::Generation(format!(
                    "object {i} could not be placed after {} attempts",
                    spec.max_retries
                )))
            }
        }
    }

    let mut labels = vec![Label::Id; spec.width * spec.height];
    let mut masks = Vec::with_capacity(objects.len());
    for (id, obj) in objects.iter().enumerate() {
        let mut px = Vec::new();
        for r in (obj.center_row - obj.semi_rows)..=(obj.center_row + obj.semi_rows) {
            for c in (obj.center_col - obj.semi_cols)..=(obj.center_col + obj.semi_cols) {
                if obj.contains(r, c) {
                    px.push((r as usize, c as usize));
                    if obj.ood {
                        labels[r as usize * spec.width + c as usize] = Label::Ood;
                    }
                }
            }
        }
        let region = PixelRegion::new(px, spec.width, spec.height)?;
        masks.push(InstanceMask::new(id as i64, region));
    }
    Ok(Scene {
        gt: GroundTruth::new(spec.width, spec.height, labels)?,
        masks: MaskSet::new(spec.width, spec.height, masks)?,
        objects,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    /// Gaussian blur applied to the whole map (boundary ambiguity).
    pub boundary_blur_sigma: f64,
    /// Score tilt across each anomalous object (inconsistent scores).
    pub intra_object_ramp: f64,
    /// Background Gaussian blobs (false-positive sources).
    pub clutter_count: usize,
    pub clutter_amplitude: f64,
    pub pixel_noise_sigma: f64,
    pub mu_ood: f64,
    pub mu_bg: f64,
}

impl CorruptionSpec {
    /// No corruption: an exact two-level map.
    pub fn clean() -> Self {
        Self {
            boundary_blur_sigma: 0.0,
            intra_object_ramp: 0.0,
            clutter_count: 0,
            clutter_amplitude: 0.0,
            pixel_noise_sigma: 0.0,
            mu_ood: 0.8,
            mu_bg: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("boundary_blur_sigma", self.boundary_blur_sigma),
            ("intra_object_ramp", self.intra_object_ramp),
            ("clutter_amplitude", self.clutter_amplitude),
            ("pixel_noise_sigma", self.pixel_noise_sigma),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        for (name, v) in [("mu_ood", self.mu_ood), ("mu_bg", self.mu_bg)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        Self {
            boundary_blur_sigma: 2.0,
            intra_object_ramp: 0.6,
            clutter_count: 12,
            clutter_amplitude: 0.8,
            pixel_noise_sigma: 0.05,
            mu_ood: 0.8,
            mu_bg: 0.1,
        }
    }
}

const CLUTTER_MIN_WIDTH: f64 = 1.5;
const CLUTTER_MAX_WIDTH: f64 = 3.5;

/// Turns ground truth into a corrupted coarse anomaly map.
///
/// Steps, in order: two-level base map; linear ramp across each anomalous
/// component along a random direction, centred so the component mean is
/// unchanged; Gaussian blur; clutter blobs added on in-distribution pixels;
/// per-pixel Gaussian noise; clamp to `[0, 1]`.
pub fn corrupt_to_coarse(gt: &GroundTruth, spec: &CorruptionSpec, seed: u64) -> Result<ScoreMap> {
    let support: Vec<bool> = gt.labels().iter().map(|&l| l == Label::Id).collect();
    corrupt_with_clutter_support(gt, spec, seed, &support)
}

/// Like [`corrupt_to_coarse`], but clutter blobs are centred on and confined
/// to the ID pixels of `support` (row-major, one flag per pixel). When
/// `support` holds no ID pixel, clutter falls back to the whole background.
pub fn corrupt_with_clutter_support(
    gt: &GroundTruth,
    spec: &CorruptionSpec,
    seed: u64,
    support: &[bool],
) -> Result<ScoreMap> {
    spec.validate()?;
    let (w, h) = gt.dims();
    let mut rng = SeededRng::new(seed, Stream::Corruption);
    let labels = gt.labels();
    let mut values: Vec<f64> = labels
        .iter()
        .map(|&l| if l == Label::Ood { spec.mu_ood } else { spec.mu_bg })
        .collect();

    let ood: Vec<bool> = labels.iter().map(|&l| l == Label::Ood).collect();
    let (comp, sizes) = label_components(&ood, w, h);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); sizes.len()];
    for (i, &l) in comp.iter().enumerate() {
        if l > 0 {
            members[l as usize - 1].push(i);
        }
    }
    for px in &members {
        let angle = 2.0 * PI * rng.uniform();
        let (cos, sin) = (angle.cos(), angle.sin());
        let proj: Vec<f64> = px
            .iter()
            .map(|&i| (i % w) as f64 * cos + (i / w) as f64 * sin)
            .collect();
        let lo = proj.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = proj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (&i, &p) in px.iter().zip(&proj) {
            let t = if hi > lo { (p - lo) / (hi - lo) } else { 0.5 };
            values[i] += spec.intra_object_ramp * (t - 0.5);
        }
    }

    let mut map = ScoreMap::from_vec(w, h, values)?;
    if spec.boundary_blur_sigma > 0.0 {
        map = gaussian_blur(&map, spec.boundary_blur_sigma)?;
    }

    if support.len() != w * h {
        return Err(Error::Dimension(format!(
            "clutter support has {} entries, expected {}",
            support.len(),
            w * h
        )));
    }
    let mut host: Vec<bool> = (0..w * h).map(|i| support[i] && labels[i] == Label::Id).collect();
    if !host.contains(&true) {
        host = labels.iter().map(|&l| l == Label::Id).collect();
    }
    let background: Vec<usize> = (0..w * h).filter(|&i| host[i]).collect();
    let mut centers: Vec<(i64, i64)> = Vec::new();
    let min_sep = 6.0 * CLUTTER_MAX_WIDTH + 2.0;
    for _ in 0..spec.clutter_count {
        let width = CLUTTER_MIN_WIDTH + (CLUTTER_MAX_WIDTH - CLUTTER_MIN_WIDTH) * rng.uniform();
        let amp = spec.clutter_amplitude * (0.5 + 0.5 * rng.uniform());
        if background.is_empty() {
            continue;
        }
        let mut center = None;
        for _ in 0..1000 {
            let i = background[rng.range(0, background.len() as i64 - 1) as usize];
            let cand = ((i / w) as i64, (i % w) as i64);
            let far = centers.iter().all(|&(r, c)| {
                (((r - cand.0).pow(2) + (c - cand.1).pow(2)) as f64).sqrt() >= min_sep
            });
            center = Some(cand);
            if far {
                break;
            }
        }
        let (cr, cc) = center.expect("background is not empty");
        centers.push((cr, cc));
        let reach = (3.0 * width).ceil() as i64;
        for r in (cr - reach).max(0)..=(cr + reach).min(h as i64 - 1) {
            for c in (cc - reach).max(0)..=(cc + reach).min(w as i64 - 1) {
                let i = r as usize * w + c as usize;
                if !host[i] {
                    continue;
                }
                let d2 = ((r - cr).pow(2) + (c - cc).pow(2)) as f64;
                map.values_mut()[i] += amp * (-d2 / (2.0 * width * width)).exp();
            }
        }
    }

    if spec.pixel_noise_sigma > 0.0 {
        for v in map.values_mut() {
            *v += spec.pixel_noise_sigma * rng.normal();
        }
    }
    Ok(map.map(clamp01))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MaskPerturbSpec {
    /// Positive: dilate by this L1 radius; negative: erode.
    pub dilate_erode_radius: i64,
    pub dropout_probability: f64,
    pub spurious_mask_count: usize,
}

impl MaskPerturbSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.dropout_probability) {
            return Err(Error::Config(format!(
                "dropout_probability must lie in [0, 1], got {}",
                self.dropout_probability
            )));
        }
        Ok(())
    }
}

/// Dilation (`radius > 0`) or erosion (`radius < 0`) with an L1 (diamond)
/// structuring element. Pixels outside the image count as background.
pub fn morph(mask: &[bool], width: usize, height: usize, radius: i64) -> Vec<bool> {
    if radius == 0 {
        return mask.to_vec();
    }
    let r = radius.abs();
    let (w, h) = (width as i64, height as i64);
    let mut out = vec![false; mask.len()];
    for row in 0..h {
        for col in 0..w {
            let i = (row * w + col) as usize;
            if radius > 0 {
                if !mask[i] {
                    continue;
                }
                for dr in -r..=r {
                    let span = r - dr.abs();
                    for dc in -span..=span {
                        let (nr, nc) = (row + dr, col + dc);
                        if nr >= 0 && nc >= 0 && nr < h && nc < w {
                            out[(nr * w + nc) as usize] = true;
                        }
                    }
                }
            } else {
                let keep = (-r..=r).all(|dr| {
                    let span = r - dr.abs();
                    (-span..=span).all(|dc| {
                        let (nr, nc) = (row + dr, col + dc);
                        nr >= 0 && nc >= 0 && nr < h && nc < w && mask[(nr * w + nc) as usize]
                    })
                });
                out[i] = keep;
            }
        }
    }
    out
}

/// Degrades a mask set: morphology, then dropout, then spurious masks.
///
/// Dropout draws one uniform per input mask, in input order, and drops the
/// mask when the draw falls below the probability. The draws do not depend
/// on the probability, so for a fixed seed the masks surviving a higher
/// probability are a subset of those surviving a lower one.
pub fn perturb_masks(masks: &MaskSet, spec: &MaskPerturbSpec, seed: u64) -> Result<MaskSet> {
    spec.validate()?;
    let (w, h) = masks.dims();
    let mut out = Vec::with_capacity(masks.len() + spec.spurious_mask_count);
    let mut dropout = SeededRng::new(seed, Stream::Dropout);
    for m in masks.masks() {
        let u = dropout.uniform();
        let region = if spec.dilate_erode_radius == 0 {
            Some(m.region.clone())
        } else {
            let grid = morph(&m.region.to_mask(w, h), w, h, spec.dilate_erode_radius);
            PixelRegion::from_mask(&grid, w)
        };
        let Some(region) = region else {
            log::info!("mask {} vanished under erosion; removed", m.id);
            continue;
        };
        if u < spec.dropout_probability {
            continue;
        }
        out.push(InstanceMask::new(m.id, region));
    }

    let mut rng = SeededRng::new(seed, Stream::Spurious);
    let first_id = masks.masks().iter().map(|m| m.id).max().map_or(0, |m| m + 1);
    for next_id in (first_id..).take(spec.spurious_mask_count) {
        let hr = rng.range(1, 6).min((h as i64 - 1) / 2);
        let hc = rng.range(1, 6).min((w as i64 - 1) / 2);
        let cr = rng.range(hr, h as i64 - 1 - hr);
        let cc = rng.range(hc, w as i64 - 1 - hc);
        let px: Vec<(usize, usize)> = ((cr - hr)..=(cr + hr))
            .flat_map(|r| ((cc - hc)..=(cc + hc)).map(move |c| (r as usize, c as usize)))
            .collect();
        out.push(InstanceMask::new(next_id, PixelRegion::new(px, w, h)?));
    }
    MaskSet::new(w, h, out)
}
