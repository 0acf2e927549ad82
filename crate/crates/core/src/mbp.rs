//! Boundary refinement: absolute discrete Laplacian followed by Gaussian
//! smoothing, folded back into a soft score map.
//!
//! All filters use replicate borders.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::score_map::{clamp_unit, ScoreMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MbpMode {
    /// `clamp(calibrated + lambda * smooth(|lap(calibrated)|))`
    #[default]
    Enhance,
    /// `clamp(smooth(|lap(calibrated)|))`
    Literal,
    /// `smooth(calibrated)`
    Smooth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MbpConfig {
    pub sigma: f64,
    pub mode: MbpMode,
    pub lambda: f64,
}

impl Default for MbpConfig {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            mode: MbpMode::Enhance,
            lambda: 0.5,
        }
    }
}

impl MbpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }

    /// `ceil(3 * sigma)`
    pub fn kernel_radius(&self) -> usize {
        (3.0 * self.sigma).ceil() as usize
    }
}

/// `|up + down + left + right - 4 * center|` at every pixel. Not clamped.
pub fn laplacian_abs(map: &ScoreMap) -> ScoreMap {
    let (w, h) = map.dims();
    let mut out = Vec::with_capacity(w * h);
    for r in 0..h as isize {
        for c in 0..w as isize {
            let center = map.get_replicate(r, c);
            let sum = map.get_replicate(r - 1, c)
                + map.get_replicate(r + 1, c)
                + map.get_replicate(r, c - 1)
                + map.get_replicate(r, c + 1);
            out.push((sum - 4.0 * center).abs());
        }
    }
    ScoreMap::from_vec(w, h, out).expect("dimensions preserved")
}

/// Normalized 1-D Gaussian taps for offsets `-r..=r`, `r = ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("sigma must be > 0, got {sigma}")));
    }
    let r = (3.0 * sigma).ceil() as isize;
    let denom = 2.0 * sigma * sigma;
    let raw: Vec<f64> = (-r..=r).map(|i| (-((i * i) as f64) / denom).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|g| g / total).collect())
}

fn convolve_rows(map: &ScoreMap, kernel: &[f64]) -> ScoreMap {
    let (w, h) = map.dims();
    let r = (kernel.len() / 2) as isize;
    let mut out = Vec::with_capacity(w * h);
    for row in 0..h as isize {
        for col in 0..w as isize {
            let mut acc = 0.0;
            for (k, g) in kernel.iter().enumerate() {
                acc += g * map.get_replicate(row, col + k as isize - r);
            }
            out.push(acc);
        }
    }
    ScoreMap::from_vec(w, h, out).expect("dimensions preserved")
}

fn convolve_cols(map: &ScoreMap, kernel: &[f64]) -> ScoreMap {
    let (w, h) = map.dims();
    let r = (kernel.len() / 2) as isize;
    let mut out = Vec::with_capacity(w * h);
    for row in 0..h as isize {
        for col in 0..w as isize {
            let mut acc = 0.0;
            for (k, g) in kernel.iter().enumerate() {
                acc += g * map.get_replicate(row + k as isize - r, col);
            }
            out.push(acc);
        }
    }
    ScoreMap::from_vec(w, h, out).expect("dimensions preserved")
}

/// Separable Gaussian blur. The result is clamped to the input's value range,
/// which makes constant maps exact fixed points.
pub fn gaussian_blur(map: &ScoreMap, sigma: f64) -> Result<ScoreMap> {
    let kernel = gaussian_kernel(sigma)?;
    let (lo, hi) = map.min_max();
    let out = convolve_cols(&convolve_rows(map, &kernel), &kernel);
    Ok(out.map(|v| v.clamp(lo, hi)))
}

pub fn gaussian_smooth(map: &ScoreMap, cfg: &MbpConfig) -> Result<ScoreMap> {
    cfg.validate()?;
    gaussian_blur(map, cfg.sigma)
}

/// Applies the boundary refinement in the configured mode. Every mode yields
/// a soft map in `[0, 1]`.
pub fn mbp_apply(calibrated: &ScoreMap, cfg: &MbpConfig) -> Result<ScoreMap> {
    cfg.validate()?;
    match cfg.mode {
        MbpMode::Literal => Ok(clamp_unit(&gaussian_smooth(&laplacian_abs(calibrated), cfg)?)),
        MbpMode::Smooth => Ok(clamp_unit(&gaussian_smooth(calibrated, cfg)?)),
        MbpMode::Enhance => {
            let edges = gaussian_smooth(&laplacian_abs(calibrated), cfg)?;
            let mut out = calibrated.clone();
            for (o, e) in out.values_mut().iter_mut().zip(edges.values()) {
                *o += cfg.lambda * e;
            }
            Ok(clamp_unit(&out))
        }
    }
}
