//! On-disk synthetic corpora: `<root>/<seed>/{coarse.fmap, masks.json,
//! gt.pgm, meta.json}`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, FormatError};
use crate::io;
use crate::metrics::GroundTruth;
use crate::oasc::MaskSet;
use crate::score_map::ScoreMap;
use crate::synth::{corrupt_with_clutter_support, generate_scene, perturb_masks, CorruptionSpec, MaskPerturbSpec, SceneSpec};

pub const COARSE_FILE: &str = "coarse.fmap";
pub const MASKS_FILE: &str = "masks.json";
pub const GT_FILE: &str = "gt.pgm";
pub const META_FILE: &str = "meta.json";

/// Where clutter blobs may appear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ClutterHost {
    /// Inside ID distractor objects, so every blob is covered by a mask.
    #[default]
    Distractors,
    /// Anywhere in the ID background.
    Background,
}

/// Everything needed to regenerate one corpus image from its seed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SynthConfig {
    pub scene: SceneSpec,
    pub corruption: CorruptionSpec,
    pub perturb: MaskPerturbSpec,
    #[serde(default)]
    pub clutter_host: ClutterHost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub coarse: ScoreMap,
    pub masks: MaskSet,
    pub gt: GroundTruth,
}

/// Generates the image for `seed` in memory.
pub fn synthesize(cfg: &SynthConfig, seed: u64) -> Result<Sample, Error> {
    let scene_spec = SceneSpec {
        seed,
        ..cfg.scene.clone()
    };
    let scene = generate_scene(&scene_spec)?;
    let (w, h) = scene.gt.dims();
    let support: Vec<bool> = match cfg.clutter_host {
        ClutterHost::Background => vec![true; w * h],
        ClutterHost::Distractors => {
            let hosts: Vec<_> = scene.objects.iter().filter(|o| !o.ood).collect();
            (0..w * h)
                .map(|i| hosts.iter().any(|o| o.contains((i / w) as i64, (i % w) as i64)))
                .collect()
        }
    };
    let coarse = corrupt_with_clutter_support(&scene.gt, &cfg.corruption, seed, &support)?;
    let masks = perturb_masks(&scene.masks, &cfg.perturb, seed)?;
    Ok(Sample {
        id: seed.to_string(),
        coarse,
        masks,
        gt: scene.gt,
    })
}

pub fn write_sample(root: &Path, sample: &Sample, meta: &serde_json::Value) -> Result<(), FormatError> {
    let dir = root.join(&sample.id);
    io::write_fmap(&sample.coarse, dir.join(COARSE_FILE))?;
    io::write_masks(&sample.masks, dir.join(MASKS_FILE))?;
    io::write_gt_pgm(&sample.gt, dir.join(GT_FILE))?;
    let text = serde_json::to_string_pretty(meta)? + "\n";
    let path = dir.join(META_FILE);
    std::fs::write(&path, text).map_err(|e| FormatError::io(path, e))
}

pub fn read_sample(dir: &Path) -> Result<Sample, FormatError> {
    let coarse = io::read_fmap(dir.join(COARSE_FILE))?;
    let masks = io::read_mask_document(dir.join(MASKS_FILE))?;
    let gt = io::read_gt_pgm(dir.join(GT_FILE))?;
    let id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Sample { id, coarse, masks, gt })
}

/// Sample directories under `root`, ordered numerically when the names are
/// seeds and lexicographically otherwise.
pub fn list_samples(root: &Path) -> Result<Vec<PathBuf>, FormatError> {
    let entries = std::fs::read_dir(root).map_err(|e| FormatError::io(root, e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| FormatError::io(root, e))?;
        let path = entry.path();
        if path.is_dir() && path.join(GT_FILE).is_file() {
            dirs.push(path);
        }
    }
    dirs.sort_by_key(|p| {
        let name = p.file_name().unwrap().to_string_lossy().into_owned();
        (name.parse::<u64>().ok(), name)
    });
    Ok(dirs)
}
