//! The three-stage refinement (coarse map -> calibration -> boundary pass)
//! and the four-row stage ablation.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mbp::{mbp_apply, MbpConfig};
use crate::oasc::{calibrate, MaskSet, OascConfig};
use crate::score_map::{clamp_unit, ScoreMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stages {
    pub oasc: bool,
    pub mbp: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Self {
            oasc: true,
            mbp: true,
        }
    }
}

impl Stages {
    /// The ablation rows: coarse only, +calibration, +boundary, both.
    pub const ABLATION: [Stages; 4] = [
        Stages { oasc: false, mbp: false },
        Stages { oasc: true, mbp: false },
        Stages { oasc: false, mbp: true },
        Stages { oasc: true, mbp: true },
    ];

    pub fn name(&self) -> &'static str {
        match (self.oasc, self.mbp) {
            (false, false) => "cas",
            (true, false) => "cas+oasc",
            (false, true) => "cas+mbp",
            (true, true) => "cas+oasc+mbp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RefineConfig {
    pub stages: Stages,
    pub oasc: OascConfig,
    pub mbp: MbpConfig,
}

/// Clamps the coarse map, then applies the enabled stages in order.
/// `masks` may be `None` only when calibration is disabled.
pub fn refine(init: &ScoreMap, masks: Option<&MaskSet>, cfg: &RefineConfig) -> Result<ScoreMap> {
    let mut map = clamp_unit(init);
    if cfg.stages.oasc {
        let masks = masks.ok_or_else(|| {
            crate::error::Error::Config("calibration enabled but no masks given".into())
        })?;
        map = calibrate(&map, masks, &cfg.oasc)?;
    }
    if cfg.stages.mbp {
        map = mbp_apply(&map, &cfg.mbp)?;
    }
    Ok(map)
}
