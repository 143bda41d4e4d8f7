//! Unpaired corpus loading and random patch sampling.

use std::path::Path;
use std::sync::mpsc::{sync_channel, Receiver};
use std::sync::Arc;

use candle_core::Tensor;
use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{AlphaSampling, TrainConfig};
use crate::error::{Error, Result};
use crate::imaging::{image_files, load_image, ImageTensor};

/// A set of 3-channel images, each at least `min_side` on both sides.
#[derive(Debug, Clone)]
pub struct ImageSet {
    images: Vec<ImageTensor>,
}

impl ImageSet {
    /// Loads every PNG/JPEG in `dir`. Images smaller than `min_side` are
    /// upscaled bilinearly, keeping their aspect ratio.
    pub fn load_dir(dir: impl AsRef<Path>, min_side: usize) -> Result<Self> {
        let dir = dir.as_ref();
        let files = image_files(dir)?;
        if files.is_empty() {
            return Err(Error::Data(format!("no PNG or JPEG images in {}", dir.display())));
        }
        let images = files.iter().map(load_image).collect::<Result<Vec<_>>>()?;
        let set = Self::from_images(images, min_side)?;
        log::info!("loaded {} images from {}", set.len(), dir.display());
        Ok(set)
    }

    pub fn from_images(images: Vec<ImageTensor>, min_side: usize) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Data("image set is empty".into()));
        }
        let images = images
            .into_iter()
            .map(|img| {
                let (h, w) = (img.height(), img.width());
                if h >= min_side && w >= min_side {
                    return Ok(img);
                }
                let scale = min_side as f64 / h.min(w) as f64;
                let nh = ((h as f64 * scale).round() as usize).max(min_side);
                let nw = ((w as f64 * scale).round() as usize).max(min_side);
                warn!("upscaling {h}x{w} image to {nh}x{nw} to fit {min_side}px patches");
                img.resize(nh, nw)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { images })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[ImageTensor] {
        &self.images
    }

    fn random_crop<R: Rng>(&self, patch: usize, rng: &mut R) -> Result<Tensor> {
        let img = &self.images[rng.random_range(0..self.images.len())];
        let top = rng.random_range(0..=img.height() - patch);
        let left = rng.random_range(0..=img.width() - patch);
        Ok(img.crop(top, left, patch, patch)?.into_tensor())
    }
}

/// One training batch: unpaired clean and exemplar crops plus the density
/// exponent used for rendering.
#[derive(Debug, Clone)]
pub struct Batch {
    /// `B x 3 x p x p` clean crops.
    pub x: Tensor,
    /// `B x 3 x p x p` exemplar crops.
    pub y: Tensor,
    pub alpha: f64,
}

/// Serializable position of the sampling RNG.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        let seed: String = rng.get_seed().iter().map(|b| format!("{b:02x}")).collect();
        Self { seed, stream: rng.get_stream(), word_pos: rng.get_word_pos().to_string() }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        let bad = || Error::Incompatible(format!("malformed RNG state {self:?}"));
        if self.seed.len() != 64 {
            return Err(bad());
        }
        let mut seed = [0u8; 32];
        for (i, byte) in seed.iter_mut().enumerate() {
            *byte = u8::from_str_radix(&self.seed[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse().map_err(|_| bad())?);
        Ok(rng)
    }
}

/// Draws `batch_size` independent crops from each set (images with
/// replacement, uniform crop origins) and a density exponent.
pub fn sample_batch<R: Rng>(clean: &ImageSet, exemplars: &ImageSet, cfg: &TrainConfig, rng: &mut R) -> Result<Batch> {
    let p = cfg.patch_size;
    let mut xs = Vec::with_capacity(cfg.batch_size);
    let mut ys = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.batch_size {
        xs.push(clean.random_crop(p, rng)?);
        ys.push(exemplars.random_crop(p, rng)?);
    }
    let alpha = match cfg.alpha_sampling {
        AlphaSampling::Fixed(a) => a,
        AlphaSampling::Uniform([lo, hi]) if lo == hi => lo,
        AlphaSampling::Uniform([lo, hi]) => rng.random_range(lo..=hi),
    };
    Ok(Batch { x: Tensor::stack(&xs, 0)?, y: Tensor::stack(&ys, 0)?, alpha })
}

enum Source {
    Inline { clean: Arc<ImageSet>, exemplars: Arc<ImageSet>, cfg: TrainConfig, rng: ChaCha8Rng },
    Prefetch { rx: Receiver<Result<(Batch, RngState)>> },
}

/// Endless batch stream. Each batch comes with the RNG state right after it
/// was drawn, so a checkpoint taken after consuming it resumes the exact
/// same stream whether or not batches were prefetched.
pub struct Loader {
    source: Source,
}

impl Loader {
    pub fn new(clean: Arc<ImageSet>, exemplars: Arc<ImageSet>, cfg: &TrainConfig, rng: ChaCha8Rng) -> Self {
        let cfg = cfg.clone();
        if cfg.prefetch == 0 {
            return Self { source: Source::Inline { clean, exemplars, cfg, rng } };
        }
        let (tx, rx) = sync_channel(cfg.prefetch);
        std::thread::spawn(move || {
            let mut rng = rng;
            loop {
                let item = sample_batch(&clean, &exemplars, &cfg, &mut rng).map(|b| (b, RngState::capture(&rng)));
                let failed = item.is_err();
                if tx.send(item).is_err() || failed {
                    break;
                }
            }
        });
        Self { source: Source::Prefetch { rx } }
    }

    pub fn next_batch(&mut self) -> Result<(Batch, RngState)> {
        match &mut self.source {
            Source::Inline { clean, exemplars, cfg, rng } => {
                let batch = sample_batch(clean, exemplars, cfg, rng)?;
                Ok((batch, RngState::capture(rng)))
            }
            Source::Prefetch { rx } => {
                rx.recv().map_err(|_| Error::Data("batch prefetch thread stopped".into()))?
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(n: usize, h: usize, w: usize) -> ImageSet {
        let imgs = (0..n)
            .map(|i| {
                let data = (0..3 * h * w).map(|j| ((i * 31 + j) % 97) as f32 / 96.0).collect();
                ImageTensor::from_vec(data, 3, h, w).unwrap()
            })
            .collect();
        ImageSet::from_images(imgs, 64).unwrap()
    }

    fn cfg() -> TrainConfig {
        TrainConfig { batch_size: 3, patch_size: 64, ..TrainConfig::new("c", "e", "k") }
    }

    #[test]
    fn crops_have_patch_shape() {
        let (a, b) = (set(2, 70, 90), set(3, 64, 64));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = sample_batch(&a, &b, &cfg(), &mut rng).unwrap();
        assert_eq!(batch.x.dims(), &[3, 3, 64, 64]);
        assert_eq!(batch.y.dims(), &[3, 3, 64, 64]);
        assert!((0.2..=1.0).contains(&batch.alpha));
    }

    #[test]
    fn same_seed_same_batches() {
        let (a, b) = (set(2, 80, 80), set(2, 80, 100));
        let draw = || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            (0..3)
                .map(|_| {
                    let batch = sample_batch(&a, &b, &cfg(), &mut rng).unwrap();
                    (batch.x.flatten_all().unwrap().to_vec1::<f32>().unwrap(), batch.alpha)
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn fixed_alpha_is_carried() {
        let (a, b) = (set(1, 64, 64), set(1, 64, 64));
        let cfg = TrainConfig { alpha_sampling: AlphaSampling::Fixed(1.0), ..cfg() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..4 {
            assert_eq!(sample_batch(&a, &b, &cfg, &mut rng).unwrap().alpha, 1.0);
        }
    }

    #[test]
    fn small_images_are_upscaled() {
        let s = set(1, 20, 40);
        assert_eq!((s.images()[0].height(), s.images()[0].width()), (64, 128));
    }

    #[test]
    fn empty_directory_is_a_data_error_naming_it() {
        let dir = tempfile::tempdir().unwrap();
        match ImageSet::load_dir(dir.path(), 64) {
            Err(Error::Data(msg)) => assert!(msg.contains(&dir.path().display().to_string())),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn rng_state_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        rng.set_stream(3);
        let _: u64 = rng.random();
        let state = RngState::capture(&rng);
        let mut restored = state.restore().unwrap();
        assert_eq!(rng.random::<u64>(), restored.random::<u64>());
    }

    #[test]
    fn prefetch_yields_the_inline_stream() {
        let (a, b) = (Arc::new(set(2, 70, 70)), Arc::new(set(2, 70, 70)));
        let mut inline = Loader::new(a.clone(), b.clone(), &cfg(), ChaCha8Rng::seed_from_u64(2));
        let mut ahead = Loader::new(a, b, &TrainConfig { prefetch: 2, ..cfg() }, ChaCha8Rng::seed_from_u64(2));
        for _ in 0..3 {
            let (bi, si) = inline.next_batch().unwrap();
            let (bp, sp) = ahead.next_batch().unwrap();
            assert_eq!(si, sp);
            assert_eq!(bi.alpha, bp.alpha);
            assert_eq!(
                bi.y.flatten_all().unwrap().to_vec1::<f32>().unwrap(),
                bp.y.flatten_all().unwrap().to_vec1::<f32>().unwrap()
            );
        }
    }
}
