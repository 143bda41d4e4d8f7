//! Transmission estimation and airlight transfer networks.
//!
//! Both share a full-resolution trunk: six 3x3 convolutions with stride 1,
//! each followed by a leaky ReLU, with residual additions from layer 2 into
//! layer 4 and from layer 4 into layer 6. There is no down- or upsampling, so
//! the transmission head sees features at the input resolution.

use candle_core::Tensor;
use rand::Rng;

use super::conv::{leaky_relu, Conv2d};
use super::params::{init_conv, init_conv_with_gain, ParamStore};
use super::LEAKY_SLOPE;
use crate::error::{invalid, Result};
use crate::imaging::{Airlight, ImageTensor, TransmissionMap};

/// Smallest spatial size accepted by the generator networks.
pub const MIN_GENERATOR_SIZE: usize = 16;

/// Lower bound applied to predicted transmission so `t^alpha` stays
/// differentiable where the sigmoid saturates.
const MIN_TRANSMISSION: f32 = 1e-6;

/// Init gain of the sigmoid heads; initial outputs sit near 0.5.
const HEAD_GAIN: f64 = 0.01;

#[derive(Debug, Clone)]
struct Trunk {
    layers: Vec<Conv2d>,
}

impl Trunk {
    fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, width: usize) -> Result<Self> {
        let mut layers = Vec::with_capacity(6);
        for i in 0..6 {
            let cin = if i == 0 { 3 } else { width };
            layers.push(init_conv(store, rng, &format!("conv{}", i + 1), cin, width, 3, 1, 1)?);
        }
        Ok(Self { layers })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let act = |i: usize, h: &Tensor| leaky_relu(&self.layers[i].forward(h)?, LEAKY_SLOPE);
        let h1 = act(0, x)?;
        let h2 = act(1, &h1)?;
        let h3 = act(2, &h2)?;
        let h4 = (act(3, &h3)? + &h2)?;
        let h5 = act(4, &h4)?;
        Ok((act(5, &h5)? + &h4)?)
    }
}

fn check_input(x: &Tensor, what: &str) -> Result<()> {
    let (_, c, h, w) = x.dims4()?;
    if c != 3 {
        return Err(invalid(format!("{what} expects 3-channel input, got {c}")));
    }
    if h < MIN_GENERATOR_SIZE || w < MIN_GENERATOR_SIZE {
        return Err(invalid(format!(
            "{what} needs at least {MIN_GENERATOR_SIZE}x{MIN_GENERATOR_SIZE} input, got {h}x{w}"
        )));
    }
    Ok(())
}

/// Transmission estimation network: clean image to a same-size
/// single-channel transmission map in `(0, 1)`.
#[derive(Debug, Clone)]
pub struct TransmissionNet {
    trunk: Trunk,
    head: Conv2d,
    params: ParamStore,
}

impl TransmissionNet {
    pub fn new<R: Rng>(width: usize, rng: &mut R) -> Result<Self> {
        let mut params = ParamStore::new();
        let trunk = Trunk::new(&mut params, rng, width)?;
        let head = init_conv_with_gain(&mut params, rng, "conv7", width, 1, 3, 1, 1, HEAD_GAIN)?;
        Ok(Self { trunk, head, params })
    }

    /// `N x 3 x H x W` to `N x 1 x H x W`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        check_input(x, "transmission network")?;
        let logits = self.head.forward(&self.trunk.forward(x)?)?;
        Ok(candle_nn::ops::sigmoid(&logits)?.clamp(MIN_TRANSMISSION, 1f32)?)
    }

    pub fn estimate(&self, x: &ImageTensor) -> Result<TransmissionMap> {
        let t = self.forward(&x.tensor().unsqueeze(0)?)?;
        TransmissionMap::new(t.squeeze(0)?)
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }
}

/// Airlight transfer network: hazy exemplar to one airlight triple, via the
/// shared trunk, a 3-channel head and global average pooling.
#[derive(Debug, Clone)]
pub struct AirlightNet {
    trunk: Trunk,
    head: Conv2d,
    params: ParamStore,
}

impl AirlightNet {
    pub fn new<R: Rng>(width: usize, rng: &mut R) -> Result<Self> {
        let mut params = ParamStore::new();
        let trunk = Trunk::new(&mut params, rng, width)?;
        let head = init_conv_with_gain(&mut params, rng, "conv7", width, 3, 3, 1, 1, HEAD_GAIN)?;
        Ok(Self { trunk, head, params })
    }

    /// `N x 3 x H x W` to `N x 3`.
    pub fn forward(&self, y: &Tensor) -> Result<Tensor> {
        check_input(y, "airlight network")?;
        let pooled = self.head.forward(&self.trunk.forward(y)?)?.mean((2, 3))?;
        Ok(candle_nn::ops::sigmoid(&pooled)?)
    }

    pub fn estimate(&self, y: &ImageTensor) -> Result<Airlight> {
        let a = self.forward(&y.tensor().unsqueeze(0)?)?.squeeze(0)?.to_vec1::<f32>()?;
        Airlight::new([a[0], a[1], a[2]])
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }
}
