//! Frozen VGG16 feature extractor with named ReLU taps.
//!
//! Weights are plain tensors rather than [`candle_core::Var`]s, so the
//! autograd engine never produces gradients for them: gradients flow through
//! the backbone to its input only.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use candle_core::{DType, Device, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::conv::{max_pool2x2, Conv2d};
use crate::error::{invalid, Error, Result};
use crate::imaging::ImageTensor;

/// Channel widths of the VGG16 convolutions up to `relu4_3`, grouped by
/// pooling block.
const BLOCKS: [&[usize]; 4] = [&[64, 64], &[128, 128], &[256, 256, 256], &[512, 512, 512]];

/// Index of each convolution inside torchvision's `features` sequential.
const TORCHVISION_INDICES: [usize; 10] = [0, 2, 5, 7, 10, 12, 14, 17, 19, 21];

const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

/// A named activation inside the backbone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tap {
    Relu1_2,
    Relu2_2,
    Relu3_3,
    Relu4_3,
}

impl Tap {
    pub const ALL: [Tap; 4] = [Tap::Relu1_2, Tap::Relu2_2, Tap::Relu3_3, Tap::Relu4_3];

    pub fn as_str(self) -> &'static str {
        match self {
            Tap::Relu1_2 => "relu1_2",
            Tap::Relu2_2 => "relu2_2",
            Tap::Relu3_3 => "relu3_3",
            Tap::Relu4_3 => "relu4_3",
        }
    }

    fn block(self) -> usize {
        self as usize
    }

    /// Number of 2x2 poolings applied before this tap.
    fn pools(self) -> usize {
        self.block()
    }
}

impl fmt::Display for Tap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Tap::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| invalid(format!("unknown feature tap {s:?}")))
    }
}

#[derive(Debug, Clone)]
pub struct FeatureBackbone {
    blocks: Vec<Vec<Conv2d>>,
    mean: Tensor,
    std: Tensor,
    id: String,
}

impl FeatureBackbone {
    /// Loads pretrained VGG16 weights from a safetensors file using
    /// torchvision's `features.{i}.weight` / `features.{i}.bias` names.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        let tensors = candle_core::safetensors::load(path, &Device::Cpu)
            .map_err(|e| Error::Format { path: path.to_path_buf(), reason: e.to_string() })?;
        let fetch = |name: String, shape: &[usize]| -> Result<Tensor> {
            let t = tensors
                .get(&name)
                .ok_or_else(|| Error::Format { path: path.to_path_buf(), reason: format!("missing {name}") })?;
            if t.dims() != shape {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    reason: format!("{name} has shape {:?}, expected {shape:?}", t.dims()),
                });
            }
            Ok(t.to_dtype(DType::F32)?)
        };
        let mut layer = 0;
        let mut cin = 3;
        let mut blocks = Vec::new();
        for widths in BLOCKS {
            let mut convs = Vec::new();
            for &cout in widths {
                let idx = TORCHVISION_INDICES[layer];
                convs.push(Conv2d {
                    weight: fetch(format!("features.{idx}.weight"), &[cout, cin, 3, 3])?,
                    bias: Some(fetch(format!("features.{idx}.bias"), &[cout])?),
                    stride: 1,
                    padding: 1,
                });
                cin = cout;
                layer += 1;
            }
            blocks.push(convs);
        }
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        Self::assemble(blocks, format!("vgg16:{name}"))
    }

    /// A VGG16-topology backbone with seeded random weights and every width
    /// divided by `width_divisor`. Stands in for pretrained weights when none
    /// are available; features are only comparable within one seed and width.
    pub fn seeded(width_divisor: usize, seed: u64) -> Result<Self> {
        if width_divisor == 0 || 64 % width_divisor != 0 {
            return Err(invalid(format!("backbone width divisor must divide 64, got {width_divisor}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cin = 3;
        let mut blocks = Vec::new();
        for widths in BLOCKS {
            let mut convs = Vec::new();
            for &w in widths {
                let cout = w / width_divisor;
                let fan_in = cin * 9;
                let normal = Normal::new(0.0f32, (2.0 / fan_in as f32).sqrt()).expect("positive std");
                let weights: Vec<f32> = (0..cout * fan_in).map(|_| normal.sample(&mut rng)).collect();
                convs.push(Conv2d {
                    weight: Tensor::from_vec(weights, (cout, cin, 3, 3), &Device::Cpu)?,
                    bias: Some(Tensor::zeros(cout, DType::F32, &Device::Cpu)?),
                    stride: 1,
                    padding: 1,
                });
                cin = cout;
            }
            blocks.push(convs);
        }
        Self::assemble(blocks, format!("vgg16-random:w{width_divisor}:s{seed}"))
    }

    fn assemble(blocks: Vec<Vec<Conv2d>>, id: String) -> Result<Self> {
        Ok(Self {
            blocks,
            mean: Tensor::from_vec(IMAGENET_MEAN.to_vec(), (1, 3, 1, 1), &Device::Cpu)?,
            std: Tensor::from_vec(IMAGENET_STD.to_vec(), (1, 3, 1, 1), &Device::Cpu)?,
            id,
        })
    }

    pub fn to_dtype(&self, dtype: DType) -> Result<Self> {
        Ok(Self {
            blocks: self
                .blocks
                .iter()
                .map(|b| b.iter().map(|c| c.to_dtype(dtype)).collect::<Result<Vec<_>>>())
                .collect::<Result<_>>()?,
            mean: self.mean.to_dtype(dtype)?,
            std: self.std.to_dtype(dtype)?,
            id: self.id.clone(),
        })
    }

    /// Stable identifier of the weights, recorded alongside FID numbers.
    pub fn id(&self) -> &str {
        &self.id
    }

    /// Channel count of the activation at `tap`.
    pub fn channels(&self, tap: Tap) -> usize {
        self.blocks[tap.block()].last().expect("non-empty block").weight.dims()[0]
    }

    /// Activations of `img` (`N x 3 x H x W`, unit range) at each requested
    /// tap, in request order.
    pub fn extract(&self, img: &Tensor, taps: &[Tap]) -> Result<Vec<Tensor>> {
        let Some(deepest) = taps.iter().copied().max() else {
            return Ok(Vec::new());
        };
        let (_, c, h, w) = img.dims4()?;
        let min = 1 << deepest.pools();
        if c != 3 || h < min || w < min {
            return Err(invalid(format!("{deepest} needs 3x{min}x{min} or larger input, got {c}x{h}x{w}")));
        }
        let mut x = img.broadcast_sub(&self.mean)?.broadcast_div(&self.std)?;
        let mut acts = Vec::with_capacity(deepest.block() + 1);
        for (b, convs) in self.blocks.iter().enumerate().take(deepest.block() + 1) {
            if b > 0 {
                x = max_pool2x2(&x)?;
            }
            for conv in convs {
                x = conv.forward(&x)?.relu()?;
            }
            acts.push(x.clone());
        }
        Ok(taps.iter().map(|t| acts[t.block()].clone()).collect())
    }

    /// [`extract`](Self::extract) with taps given by name.
    pub fn extract_named(&self, img: &Tensor, names: &[&str]) -> Result<Vec<Tensor>> {
        let taps = names.iter().map(|n| n.parse()).collect::<Result<Vec<Tap>>>()?;
        self.extract(img, &taps)
    }

    /// Features of a single typed image, each shaped `1 x C x h x w`.
    pub fn extract_features(&self, img: &ImageTensor, taps: &[Tap]) -> Result<Vec<Tensor>> {
        if img.channels() != 3 {
            return Err(invalid("backbone expects a 3-channel image"));
        }
        self.extract(&img.tensor().unsqueeze(0)?, taps)
    }
}
