use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::losses::{LossWeights, StructureConfig};
use crate::nn::MIN_DISCRIMINATOR_SIZE;

/// How the haze density exponent is chosen for each batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaSampling {
    Fixed(f64),
    Uniform([f64; 2]),
}

impl Default for AlphaSampling {
    fn default() -> Self {
        AlphaSampling::Uniform([0.2, 1.0])
    }
}

impl AlphaSampling {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        match *self {
            AlphaSampling::Fixed(a) if unit(a) => Ok(()),
            AlphaSampling::Uniform([lo, hi]) if unit(lo) && unit(hi) && lo <= hi => Ok(()),
            other => Err(invalid(format!("alpha_sampling must stay within [0, 1], got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "defaults::iterations")]
    pub iterations: usize,
    #[serde(default = "defaults::batches_per_iteration")]
    pub batches_per_iteration: usize,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::patch_size")]
    pub patch_size: usize,
    #[serde(default)]
    pub alpha_sampling: AlphaSampling,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub loss_weights: LossWeights,
    #[serde(default)]
    pub structure: StructureConfig,
    pub clean_dir: PathBuf,
    pub exemplar_dir: PathBuf,
    pub checkpoint_dir: PathBuf,
    /// Pretrained VGG16 safetensors. Without it a seeded random backbone of
    /// the same topology is used.
    #[serde(default)]
    pub backbone_weights: Option<PathBuf>,
    #[serde(default = "defaults::one")]
    pub backbone_width_divisor: usize,
    #[serde(default)]
    pub backbone_seed: u64,
    #[serde(default = "defaults::width")]
    pub generator_width: usize,
    #[serde(default = "defaults::width")]
    pub discriminator_width: usize,
    /// Batches sampled ahead on a background thread; 0 samples inline.
    #[serde(default)]
    pub prefetch: usize,
}

mod defaults {
    pub fn learning_rate() -> f64 {
        0.001
    }
    pub fn iterations() -> usize {
        100
    }
    pub fn batches_per_iteration() -> usize {
        100
    }
    pub fn batch_size() -> usize {
        32
    }
    pub fn patch_size() -> usize {
        128
    }
    pub fn one() -> usize {
        1
    }
    pub fn width() -> usize {
        64
    }
}

impl TrainConfig {
    /// Training defaults with the given corpus and output locations.
    pub fn new(clean_dir: impl Into<PathBuf>, exemplar_dir: impl Into<PathBuf>, checkpoint_dir: impl Into<PathBuf>) -> Self {
        Self {
            learning_rate: defaults::learning_rate(),
            iterations: defaults::iterations(),
            batches_per_iteration: defaults::batches_per_iteration(),
            batch_size: defaults::batch_size(),
            patch_size: defaults::patch_size(),
            alpha_sampling: AlphaSampling::default(),
            seed: 0,
            loss_weights: LossWeights::default(),
            structure: StructureConfig::default(),
            clean_dir: clean_dir.into(),
            exemplar_dir: exemplar_dir.into(),
            checkpoint_dir: checkpoint_dir.into(),
            backbone_weights: None,
            backbone_width_divisor: 1,
            backbone_seed: 0,
            generator_width: defaults::width(),
            discriminator_width: defaults::width(),
            prefetch: 0,
        }
    }

    pub fn total_steps(&self) -> usize {
        self.iterations * self.batches_per_iteration
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be at least 1"));
        }
        if self.patch_size < MIN_DISCRIMINATOR_SIZE {
            return Err(invalid(format!(
                "patch_size must be at least {MIN_DISCRIMINATOR_SIZE}, got {}",
                self.patch_size
            )));
        }
        if self.generator_width == 0 || self.discriminator_width == 0 {
            return Err(invalid("network widths must be positive"));
        }
        self.alpha_sampling.validate()?;
        self.loss_weights.validate()?;
        self.structure.ssim.validate()
    }
}
