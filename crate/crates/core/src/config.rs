//! One pipeline configuration document.
//!
//! Every constant the pipeline stages consume lives here, with defaults
//! matching the reference setup; unknown keys are rejected so stale configs
//! fail loudly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment::AugmentConfig;
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::losses::LossWeights;
use crate::nms::NmsConfig;
use crate::sampling::{GroupMap, GtAugConfig};
use crate::voxel::VoxelConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    /// Maximum frame duplication factor for the balancing plan.
    pub ds_cap: f64,
    pub gt_aug: GtAugConfig,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            ds_cap: 10.0,
            gt_aug: GtAugConfig::default(),
        }
    }
}

impl SamplingConfig {
    fn validate(&self) -> Result<()> {
        if !self.ds_cap.is_finite() || self.ds_cap < 1.0 {
            return Err(Error::config("ds_cap must be at least 1"));
        }
        if self.gt_aug.retry_limit == 0 {
            return Err(Error::config("gt_aug retry_limit must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InterpStages {
    /// Ball radius per downsampling stage, meters.
    pub radii: Vec<f64>,
    pub epsilon: f64,
}

impl Default for InterpStages {
    fn default() -> Self {
        Self {
            radii: vec![0.2, 0.4, 0.8],
            epsilon: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub voxel: VoxelConfig,
    pub augment: AugmentConfig,
    pub nms: NmsConfig,
    pub loss: LossWeights,
    pub interp: InterpStages,
    pub eval: EvalConfig,
    pub sampling: SamplingConfig,
    pub groups: GroupMap,
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {}", path.display(), e)))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.voxel.validate()?;
        self.augment.validate()?;
        self.nms.validate()?;
        self.loss.validate()?;
        self.sampling.validate()?;
        self.groups.validate()?;
        if self.interp.radii.is_empty() {
            return Err(Error::config("interp needs at least one stage radius"));
        }
        if self.interp.radii.iter().any(|&r| !(r > 0.0)) || !(self.interp.epsilon > 0.0) {
            return Err(Error::config("interp radii and epsilon must be positive"));
        }
        if self.eval.dist_thresholds.is_empty() {
            return Err(Error::config("eval needs at least one distance threshold"));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::dataset::write_json_pretty(self, path)
    }
}
