use candle_core::Tensor;
use rand::Rng;

use super::conv::{leaky_relu, Conv2d};
use super::params::{init_conv, ParamStore};
use super::LEAKY_SLOPE;
use crate::error::{invalid, Result};

pub const MIN_DISCRIMINATOR_SIZE: usize = 64;

/// Patch discriminator: four stride-2 4x4 convolutions doubling the width
/// from `base` (64, 128, 256, 512 by default), then a 3x3 single-channel
/// head and a sigmoid. A `H x W` input yields a `H/16 x W/16` score map.
#[derive(Debug, Clone)]
pub struct Discriminator {
    stages: Vec<Conv2d>,
    head: Conv2d,
    params: ParamStore,
}

impl Discriminator {
    pub fn new<R: Rng>(base: usize, rng: &mut R) -> Result<Self> {
        let mut params = ParamStore::new();
        let mut stages = Vec::with_capacity(4);
        let mut cin = 3;
        for i in 0..4 {
            let cout = base << i;
            stages.push(init_conv(&mut params, rng, &format!("stage{}", i + 1), cin, cout, 4, 2, 1)?);
            cin = cout;
        }
        let head = init_conv(&mut params, rng, "head", cin, 1, 3, 1, 1)?;
        Ok(Self { stages, head, params })
    }

    /// `N x 3 x H x W` to `N x 1 x H/16 x W/16` scores in `(0, 1)`.
    pub fn forward(&self, img: &Tensor) -> Result<Tensor> {
        let (_, c, h, w) = img.dims4()?;
        if c != 3 || h < MIN_DISCRIMINATOR_SIZE || w < MIN_DISCRIMINATOR_SIZE {
            return Err(invalid(format!(
                "discriminator needs 3x{MIN_DISCRIMINATOR_SIZE}x{MIN_DISCRIMINATOR_SIZE} or larger, got {c}x{h}x{w}"
            )));
        }
        let mut h = img.clone();
        for stage in &self.stages {
            h = leaky_relu(&stage.forward(&h)?, LEAKY_SLOPE)?;
        }
        Ok(candle_nn::ops::sigmoid(&self.head.forward(&h)?)?)
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }
}
