use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::imaging::{render_haze, transmission_from_depth, Airlight, DepthMap, ImageTensor};

/// Sampling ranges of the baseline's random haze.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub beta_range: [f64; 2],
    pub airlight_range: [f64; 2],
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { beta_range: [0.6, 1.8], airlight_range: [0.7, 1.0], seed: 0 }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        let [b0, b1] = self.beta_range;
        if !(b0 > 0.0 && b0 <= b1 && b1.is_finite()) {
            return Err(invalid(format!("beta_range must satisfy 0 < low <= high, got {:?}", self.beta_range)));
        }
        let [a0, a1] = self.airlight_range;
        if !(0.0 <= a0 && a0 <= a1 && a1 <= 1.0) {
            return Err(invalid(format!(
                "airlight_range must satisfy 0 <= low <= high <= 1, got {:?}",
                self.airlight_range
            )));
        }
        Ok(())
    }
}

/// Haze parameters drawn for one baseline image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineSample {
    pub beta: f64,
    pub airlight: f64,
}

fn uniform<R: Rng>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Hazes `x` through `t = exp(-beta d)` with a random scattering coefficient
/// and a random gray airlight.
pub fn baseline_render<R: Rng>(
    x: &ImageTensor,
    depth: Option<&DepthMap>,
    cfg: &BaselineConfig,
    rng: &mut R,
) -> Result<(ImageTensor, BaselineSample)> {
    cfg.validate()?;
    let depth = depth.ok_or_else(|| invalid("the baseline needs a depth map for every image"))?;
    if (depth.height(), depth.width()) != (x.height(), x.width()) {
        return Err(invalid(format!(
            "depth is {}x{} but the image is {}x{}",
            depth.height(),
            depth.width(),
            x.height(),
            x.width()
        )));
    }
    let sample = BaselineSample { beta: uniform(rng, cfg.beta_range), airlight: uniform(rng, cfg.airlight_range) };
    let t = transmission_from_depth(depth, sample.beta)?;
    let z = render_haze(x, &t, &Airlight::gray(sample.airlight as f32)?)?;
    Ok((z, sample))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_depth_leaves_the_image_unchanged() {
        let x = ImageTensor::from_vec((0..48).map(|i| i as f32 / 47.0).collect(), 3, 4, 4).unwrap();
        let d = DepthMap::filled(4, 4, 0.0).unwrap();
        let (z, _) = baseline_render(&x, Some(&d), &BaselineConfig::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(z.to_vec(), x.to_vec());
    }

    #[test]
    fn degenerate_ranges_give_the_closed_form() {
        let cfg = BaselineConfig { beta_range: [1.0, 1.0], airlight_range: [0.8, 0.8], seed: 0 };
        let x = ImageTensor::filled(3, 3, 3, 0.0).unwrap();
        let d = DepthMap::filled(3, 3, 1.0).unwrap();
        let (z, s) = baseline_render(&x, Some(&d), &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(s, BaselineSample { beta: 1.0, airlight: 0.8 });
        for v in z.to_vec() {
            assert!((v as f64 - 0.505_69).abs() < 1e-5, "{v}");
        }
    }

    #[test]
    fn same_seed_same_sample() {
        let x = ImageTensor::filled(3, 2, 2, 0.5).unwrap();
        let d = DepthMap::filled(2, 2, 0.5).unwrap();
        let draw = |seed| baseline_render(&x, Some(&d), &BaselineConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap().1;
        assert_eq!(draw(5), draw(5));
        let s = draw(5);
        assert!((0.6..=1.8).contains(&s.beta) && (0.7..=1.0).contains(&s.airlight));
    }

    #[test]
    fn missing_depth_is_rejected() {
        let x = ImageTensor::filled(3, 2, 2, 0.5).unwrap();
        let err = baseline_render(&x, None, &BaselineConfig::default(), &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(err, Err(crate::Error::InvalidArgument(_))));
    }

    #[test]
    fn invalid_ranges_are_rejected() {
        assert!(BaselineConfig { beta_range: [0.0, 1.0], ..Default::default() }.validate().is_err());
        assert!(BaselineConfig { beta_range: [2.0, 1.0], ..Default::default() }.validate().is_err());
        assert!(BaselineConfig { airlight_range: [0.5, 1.1], ..Default::default() }.validate().is_err());
    }
}
