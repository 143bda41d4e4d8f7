//! Objective terms: the structure-similarity prior on the transmission map,
//! the airlight-consistency prior on the rendered image, the adversarial
//! terms, and their weighted combination.
//!
//! All functions take batched `N x C x H x W` tensors (a rank-3 tensor is
//! treated as a batch of one), work in whatever float dtype they are given,
//! and return rank-0 tensors so they can be differentiated.

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::imaging::luminance;
use crate::nn::{conv2d, FeatureBackbone, Tap};

/// Clamp applied to discriminator scores before taking logs.
pub const LOG_EPS: f64 = 1e-7;

/// Weights of every objective term. Setting one to zero removes that term,
/// which is how the ablation arms are run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    #[serde(rename = "lambda_S")]
    pub structure: f64,
    #[serde(rename = "lambda_A")]
    pub airlight: f64,
    #[serde(rename = "lambda_adv")]
    pub adversarial: f64,
    #[serde(rename = "lambda_e")]
    pub edge: f64,
    #[serde(rename = "lambda_l")]
    pub luminance: f64,
    #[serde(rename = "lambda_smooth")]
    pub smoothness: f64,
    #[serde(rename = "lambda_s")]
    pub style: f64,
    #[serde(rename = "lambda_c")]
    pub content: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            structure: 1.0,
            airlight: 0.1,
            adversarial: 1.0,
            edge: 0.25,
            luminance: 0.25,
            smoothness: 1.0,
            style: 0.1,
            content: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("lambda_S", self.structure),
            ("lambda_A", self.airlight),
            ("lambda_adv", self.adversarial),
            ("lambda_e", self.edge),
            ("lambda_l", self.luminance),
            ("lambda_smooth", self.smoothness),
            ("lambda_s", self.style),
            ("lambda_c", self.content),
        ];
        for (name, v) in all {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be a non-negative number, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SsimMode {
    /// Statistics over the whole image.
    #[default]
    Global,
    /// Gaussian-weighted statistics over every fully contained window,
    /// averaged.
    Windowed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SsimConfig {
    pub dynamic_range: f64,
    pub mode: SsimMode,
    pub window: usize,
    pub window_sigma: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self { dynamic_range: 1.0, mode: SsimMode::Global, window: 11, window_sigma: 1.5 }
    }
}

impl SsimConfig {
    pub fn windowed() -> Self {
        Self { mode: SsimMode::Windowed, ..Self::default() }
    }

    pub fn c1(&self) -> f64 {
        (0.01 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (0.03 * self.dynamic_range).powi(2)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dynamic_range > 0.0) {
            return Err(invalid("SSIM dynamic range must be positive"));
        }
        if self.mode == SsimMode::Windowed && (self.window < 3 || self.window % 2 == 0) {
            return Err(invalid(format!("SSIM window must be odd and at least 3, got {}", self.window)));
        }
        if self.mode == SsimMode::Windowed && !(self.window_sigma > 0.0) {
            return Err(invalid("SSIM window sigma must be positive"));
        }
        Ok(())
    }

    /// Window side actually used on an `h x w` image: the configured window,
    /// shrunk to the largest odd size that fits.
    pub fn effective_window(&self, h: usize, w: usize) -> usize {
        let fit = h.min(w);
        let fit = if fit % 2 == 0 { fit - 1 } else { fit };
        self.window.min(fit)
    }

    /// Normalized `k x k` Gaussian weights, row-major.
    pub fn gaussian(&self, k: usize) -> Vec<f64> {
        let r = (k / 2) as f64;
        let g: Vec<f64> = (0..k)
            .map(|i| (-((i as f64 - r).powi(2)) / (2.0 * self.window_sigma.powi(2))).exp())
            .collect();
        let mut w: Vec<f64> = g.iter().flat_map(|a| g.iter().map(move |b| a * b)).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        w
    }
}

/// What weights the exponential in the smoothness term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SmoothnessWeighting {
    /// `|grad t| * exp(-|grad t|)`.
    #[default]
    Transmission,
    /// `|grad t| * exp(-|grad x|)`, the usual edge-aware form guided by the
    /// clean image.
    Image,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StructureConfig {
    pub ssim: SsimConfig,
    pub smoothness: SmoothnessWeighting,
}

/// Backbone taps compared by the style and content terms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureTaps {
    pub style: Vec<Tap>,
    pub content: Vec<Tap>,
}

impl Default for FeatureTaps {
    fn default() -> Self {
        Self { style: Tap::ALL.to_vec(), content: vec![Tap::Relu3_3] }
    }
}

impl FeatureTaps {
    pub fn new(style: Vec<Tap>, content: Vec<Tap>) -> Result<Self> {
        if style.is_empty() || content.is_empty() {
            return Err(invalid("style and content tap lists must be non-empty"));
        }
        Ok(Self { style, content })
    }
}

fn batched(t: &Tensor) -> Result<Tensor> {
    match t.rank() {
        4 => Ok(t.clone()),
        3 => Ok(t.unsqueeze(0)?),
        r => Err(invalid(format!("expected a rank 3 or 4 tensor, got rank {r}"))),
    }
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(invalid(format!("{what}: shapes {:?} and {:?} differ", a.dims(), b.dims())));
    }
    Ok(())
}

/// Contour term: mean absolute difference between the clean luminance and
/// the transmission map.
pub fn edge_loss(x_lum: &Tensor, t: &Tensor) -> Result<Tensor> {
    same_shape(x_lum, t, "edge loss")?;
    Ok((x_lum - t)?.abs()?.mean_all()?)
}

/// Per-image SSIM, shaped `N`.
pub fn ssim(x: &Tensor, t: &Tensor, cfg: &SsimConfig) -> Result<Tensor> {
    cfg.validate()?;
    same_shape(x, t, "ssim")?;
    let (x, t) = (batched(x)?, batched(t)?);
    let (n, c, h, w) = x.dims4()?;
    let (c1, c2) = (cfg.c1(), cfg.c2());
    let combine = |mx: &Tensor, mt: &Tensor, vx: &Tensor, vt: &Tensor, cov: &Tensor| -> Result<Tensor> {
        let num = ((mx * mt)?.affine(2.0, c1)? * cov.affine(2.0, c2)?)?;
        let den = ((mx.sqr()? + mt.sqr()?)?.affine(1.0, c1)? * (vx + vt)?.affine(1.0, c2)?)?;
        Ok((num / den)?)
    };
    match cfg.mode {
        SsimMode::Global => {
            let x = x.reshape((n, c * h * w))?;
            let t = t.reshape((n, c * h * w))?;
            let mx = x.mean_keepdim(1)?;
            let mt = t.mean_keepdim(1)?;
            let dx = x.broadcast_sub(&mx)?;
            let dt = t.broadcast_sub(&mt)?;
            let vx = dx.sqr()?.mean_keepdim(1)?;
            let vt = dt.sqr()?.mean_keepdim(1)?;
            let cov = (dx * dt)?.mean_keepdim(1)?;
            Ok(combine(&mx, &mt, &vx, &vt, &cov)?.squeeze(1)?)
        }
        SsimMode::Windowed => {
            let k = cfg.effective_window(h, w);
            let kernel = Tensor::from_vec(cfg.gaussian(k), (1, 1, k, k), &Device::Cpu)?.to_dtype(x.dtype())?;
            // Filter the five moment maps in one pass.
            let planes = (n * c, 1, h, w);
            let stack = Tensor::cat(
                &[x.reshape(planes)?, t.reshape(planes)?, x.sqr()?.reshape(planes)?, t.sqr()?.reshape(planes)?, (&x * &t)?.reshape(planes)?],
                0,
            )?;
            let m = conv2d(&stack, &kernel, None, 1, 0)?;
            let p = n * c;
            let mx = m.narrow(0, 0, p)?;
            let mt = m.narrow(0, p, p)?;
            let vx = (m.narrow(0, 2 * p, p)? - mx.sqr()?)?;
            let vt = (m.narrow(0, 3 * p, p)? - mt.sqr()?)?;
            let cov = (m.narrow(0, 4 * p, p)? - (&mx * &mt)?)?;
            let map = combine(&mx, &mt, &vx, &vt, &cov)?;
            Ok(map.reshape((n, ()))?.mean(1)?)
        }
    }
}

/// Luminance/contrast term: `1 - SSIM`, averaged over the batch. Lies in
/// `[0, 2]` and vanishes for identical inputs.
pub fn luminance_loss(x_lum: &Tensor, t: &Tensor, cfg: &SsimConfig) -> Result<Tensor> {
    Ok(ssim(x_lum, t, cfg)?.affine(-1.0, 1.0)?.mean_all()?)
}

fn weighted_gradient_mean(grad: &Tensor, guide: &Tensor) -> Result<Tensor> {
    if grad.elem_count() == 0 {
        return Ok(Tensor::zeros((), grad.dtype(), grad.device())?);
    }
    let weight = guide.abs()?.neg()?.exp()?;
    Ok((grad.abs()? * weight)?.mean_all()?)
}

/// Local smoothness of the transmission map: forward differences along rows
/// and columns, each weighted by `exp(-|gradient|)` of `guide` (the map
/// itself when `guide` is `None`), averaged per direction and summed.
/// A direction with fewer than two samples contributes zero.
pub fn smoothness_loss(t: &Tensor, guide: Option<&Tensor>) -> Result<Tensor> {
    let t = batched(t)?;
    let guide = match guide {
        Some(g) => {
            let g = batched(g)?;
            same_shape(&g, &t, "smoothness guide")?;
            g
        }
        None => t.clone(),
    };
    let (_, _, h, w) = t.dims4()?;
    let diff = |x: &Tensor, dim: usize, len: usize| -> Result<Tensor> {
        if len < 2 {
            let mut dims = x.dims().to_vec();
            dims[dim] = 0;
            return Ok(Tensor::zeros(dims, x.dtype(), x.device())?);
        }
        Ok((x.narrow(dim, 1, len - 1)? - x.narrow(dim, 0, len - 1)?)?)
    };
    let rows = weighted_gradient_mean(&diff(&t, 2, h)?, &diff(&guide, 2, h)?)?;
    let cols = weighted_gradient_mean(&diff(&t, 3, w)?, &diff(&guide, 3, w)?)?;
    Ok((rows + cols)?)
}

/// The three structure components and their weighted sum.
#[derive(Debug, Clone)]
pub struct StructureTerms {
    pub edge: Tensor,
    pub luminance: Tensor,
    pub smoothness: Tensor,
    pub total: Tensor,
}

/// Structure-similarity prior between the clean image `x` (converted to
/// luminance when it has three channels) and the transmission map `t`.
pub fn structure_loss(x: &Tensor, t: &Tensor, w: &LossWeights, cfg: &StructureConfig) -> Result<StructureTerms> {
    let x = batched(x)?;
    let t = batched(t)?;
    let x_lum = luminance(&x)?;
    let edge = edge_loss(&x_lum, &t)?;
    let lum = luminance_loss(&x_lum, &t, &cfg.ssim)?;
    let guide = match cfg.smoothness {
        SmoothnessWeighting::Transmission => None,
        SmoothnessWeighting::Image => Some(&x_lum),
    };
    let smooth = smoothness_loss(&t, guide)?;
    let total = ((edge.affine(w.edge, 0.0)? + lum.affine(w.luminance, 0.0)?)? + smooth.affine(w.smoothness, 0.0)?)?;
    Ok(StructureTerms { edge, luminance: lum, smoothness: smooth, total })
}

/// Mean over taps of the per-element mean squared feature difference.
pub fn feature_distance(a: &[Tensor], b: &[Tensor]) -> Result<Tensor> {
    if a.is_empty() || a.len() != b.len() {
        return Err(invalid("feature lists must be non-empty and of equal length"));
    }
    let mut acc: Option<Tensor> = None;
    for (fa, fb) in a.iter().zip(b) {
        let d = (fa - fb)?.sqr()?.mean_all()?;
        acc = Some(match acc {
            Some(s) => (s + d)?,
            None => d,
        });
    }
    Ok(acc.expect("non-empty").affine(1.0 / a.len() as f64, 0.0)?)
}

/// Style term: feature distance between exemplar `y` and rendering `z` at
/// the style taps.
pub fn style_perceptual_loss(y: &Tensor, z: &Tensor, taps: &FeatureTaps, backbone: &FeatureBackbone) -> Result<Tensor> {
    same_shape(y, z, "style loss")?;
    let (y, z) = (batched(y)?, batched(z)?);
    feature_distance(&backbone.extract(&y, &taps.style)?, &backbone.extract(&z, &taps.style)?)
}

/// Content term: feature distance between clean `x` and rendering `z` at
/// the content taps.
pub fn content_perceptual_loss(x: &Tensor, z: &Tensor, taps: &FeatureTaps, backbone: &FeatureBackbone) -> Result<Tensor> {
    same_shape(x, z, "content loss")?;
    let (x, z) = (batched(x)?, batched(z)?);
    feature_distance(&backbone.extract(&x, &taps.content)?, &backbone.extract(&z, &taps.content)?)
}

#[derive(Debug, Clone)]
pub struct AirlightTerms {
    pub style: Tensor,
    pub content: Tensor,
    pub total: Tensor,
}

/// Airlight-consistency prior. The rendering goes through the backbone once
/// for both terms.
pub fn airlight_loss(
    x: &Tensor,
    y: &Tensor,
    z: &Tensor,
    w: &LossWeights,
    taps: &FeatureTaps,
    backbone: &FeatureBackbone,
) -> Result<AirlightTerms> {
    same_shape(x, z, "airlight loss")?;
    same_shape(y, z, "airlight loss")?;
    let (x, y, z) = (batched(x)?, batched(y)?, batched(z)?);
    let mut all: Vec<Tap> = taps.style.iter().chain(&taps.content).copied().collect();
    all.sort();
    all.dedup();
    let fz = backbone.extract(&z, &all)?;
    let pick = |wanted: &[Tap]| -> Vec<Tensor> {
        wanted.iter().map(|t| fz[all.binary_search(t).expect("tap present")].clone()).collect()
    };
    let style = feature_distance(&backbone.extract(&y, &taps.style)?, &pick(&taps.style))?;
    let content = feature_distance(&backbone.extract(&x, &taps.content)?, &pick(&taps.content))?;
    let total = (style.affine(w.style, 0.0)? + content.affine(w.content, 0.0)?)?;
    Ok(AirlightTerms { style, content, total })
}

fn clamped_log(p: &Tensor) -> Result<Tensor> {
    Ok(p.clamp(LOG_EPS, f64::INFINITY)?.log()?)
}

/// Discriminator objective: `-(mean log D(y) + mean log(1 - D(z)))`.
pub fn adversarial_loss_discriminator(d_real: &Tensor, d_fake: &Tensor) -> Result<Tensor> {
    let real = clamped_log(d_real)?.mean_all()?;
    let fake = clamped_log(&d_fake.affine(-1.0, 1.0)?)?.mean_all()?;
    Ok((real + fake)?.neg()?)
}

/// Non-saturating generator objective: `-mean log D(z)`.
pub fn adversarial_loss_generator(d_fake: &Tensor) -> Result<Tensor> {
    Ok(clamped_log(d_fake)?.mean_all()?.neg()?)
}

/// The three top-level generator terms.
#[derive(Debug, Clone)]
pub struct GeneratorTerms {
    pub structure: Tensor,
    pub airlight: Tensor,
    pub adversarial: Tensor,
}

pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

/// Weighted sum of the generator terms. Fails naming the first non-finite
/// term.
pub fn total_generator_loss(terms: &GeneratorTerms, w: &LossWeights) -> Result<Tensor> {
    for (term, t) in [("L_S", &terms.structure), ("L_A", &terms.airlight), ("L_adv", &terms.adversarial)] {
        let value = scalar(t)?;
        if !value.is_finite() {
            return Err(Error::NonFinite { term, value });
        }
    }
    let total = (terms.structure.affine(w.structure, 0.0)? + terms.airlight.affine(w.airlight, 0.0)?)?;
    Ok((total + terms.adversarial.affine(w.adversarial, 0.0)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: Vec<f64>, shape: &[usize]) -> Tensor {
        Tensor::from_vec(v, shape, &Device::Cpu).unwrap()
    }

    fn full(v: f64, shape: &[usize]) -> Tensor {
        Tensor::full(v, shape, &Device::Cpu).unwrap()
    }

    fn s(x: &Tensor) -> f64 {
        scalar(x).unwrap()
    }

    #[test]
    fn edge_loss_examples() {
        let a = t(vec![0.1, 0.5, 0.9, 0.3], &[1, 1, 2, 2]);
        assert_eq!(s(&edge_loss(&a, &a).unwrap()), 0.0);
        let one = full(1.0, &[1, 1, 3, 3]);
        let q = full(0.25, &[1, 1, 3, 3]);
        assert!((s(&edge_loss(&one, &q).unwrap()) - 0.75).abs() < 1e-12);
        let b = t(vec![0.7, 0.2, 0.4, 0.8], &[1, 1, 2, 2]);
        assert_eq!(s(&edge_loss(&a, &b).unwrap()), s(&edge_loss(&b, &a).unwrap()));
        assert!(edge_loss(&a, &one).is_err());
    }

    #[test]
    fn luminance_loss_constant_images() {
        let x = full(0.5, &[1, 1, 4, 4]);
        let tt = full(0.25, &[1, 1, 4, 4]);
        let cfg = SsimConfig::default();
        let l = s(&luminance_loss(&x, &tt, &cfg).unwrap());
        // Zero variances: S = (2 * 0.5 * 0.25 + c1) / (0.5^2 + 0.25^2 + c1).
        let expected = 1.0 - (0.25 + 1e-4) / (0.3125 + 1e-4);
        assert!((l - expected).abs() < 1e-12);
        assert!((l - 0.19987).abs() < 1e-4);
        assert!(s(&luminance_loss(&x, &x, &cfg).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ssim_config_validation() {
        let mut cfg = SsimConfig::windowed();
        cfg.window = 4;
        assert!(cfg.validate().is_err());
        cfg.window = 1;
        assert!(cfg.validate().is_err());
        assert_eq!(SsimConfig::windowed().effective_window(8, 10), 7);
        assert_eq!(SsimConfig::windowed().effective_window(16, 16), 11);
        assert!((SsimConfig::default().c1() - 1e-4).abs() < 1e-18);
        assert!((SsimConfig::default().c2() - 9e-4).abs() < 1e-18);
    }

    #[test]
    fn smoothness_examples() {
        assert_eq!(s(&smoothness_loss(&full(0.4, &[1, 1, 5, 5]), None).unwrap()), 0.0);
        let pair = t(vec![0.0, 1.0], &[1, 1, 1, 2]);
        assert!((s(&smoothness_loss(&pair, None).unwrap()) - (-1f64).exp()).abs() < 1e-12);
        let single = full(0.3, &[1, 1, 1, 1]);
        assert_eq!(s(&smoothness_loss(&single, None).unwrap()), 0.0);
        let g = t(vec![0.1, 0.9, 0.3, 0.5, 0.2, 0.8, 0.7, 0.0, 0.6], &[1, 1, 3, 3]);
        let gt = g.transpose(2, 3).unwrap().contiguous().unwrap();
        assert!((s(&smoothness_loss(&g, None).unwrap()) - s(&smoothness_loss(&gt, None).unwrap())).abs() < 1e-12);
    }

    #[test]
    fn smoothness_image_guided_uses_guide_gradients() {
        let tt = t(vec![0.0, 1.0], &[1, 1, 1, 2]);
        let flat = full(0.5, &[1, 1, 1, 2]);
        // A flat guide gives weight exp(0) = 1.
        assert!((s(&smoothness_loss(&tt, Some(&flat)).unwrap()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn structure_loss_examples() {
        let x = full(0.6, &[1, 3, 4, 4]);
        let lum = full(0.6, &[1, 1, 4, 4]);
        let w = LossWeights::default();
        let cfg = StructureConfig::default();
        assert!(s(&structure_loss(&x, &lum, &w, &cfg).unwrap().total).abs() < 1e-12);

        let x = t((0..16).map(|i| (i as f64) / 16.0).collect(), &[1, 1, 4, 4]);
        let tt = t((0..16).map(|i| ((i * 7) % 16) as f64 / 20.0 + 0.1).collect(), &[1, 1, 4, 4]);
        let zero = LossWeights { edge: 0.0, luminance: 0.0, smoothness: 0.0, ..w };
        assert_eq!(s(&structure_loss(&x, &tt, &zero, &cfg).unwrap().total), 0.0);

        let terms = structure_loss(&x, &tt, &w, &cfg).unwrap();
        let manual = 0.25 * s(&terms.edge) + 0.25 * s(&terms.luminance) + s(&terms.smoothness);
        assert!((s(&terms.total) - manual).abs() < 1e-12);
    }

    #[test]
    fn weighted_sums_are_exact() {
        let w = LossWeights::default();
        // (0.75, 0.2, 0.1) through the structure weights.
        assert!((0.25 * 0.75 + 0.25 * 0.2 + 1.0 * 0.1 - 0.3375f64).abs() < 1e-15);
        let terms = GeneratorTerms { structure: full(0.3375, &[]), airlight: full(0.5, &[]), adversarial: full(0.693, &[]) };
        assert!((s(&total_generator_loss(&terms, &w).unwrap()) - 1.0805).abs() < 1e-12);
        let zeros = GeneratorTerms { structure: full(0.0, &[]), airlight: full(0.0, &[]), adversarial: full(0.0, &[]) };
        assert_eq!(s(&total_generator_loss(&zeros, &w).unwrap()), 0.0);

        let doubled = LossWeights { airlight: 0.2, ..w };
        let base = s(&total_generator_loss(&terms, &w).unwrap());
        let twice = s(&total_generator_loss(&terms, &doubled).unwrap());
        assert!((twice - base - 0.1 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn total_loss_names_non_finite_term() {
        let terms = GeneratorTerms { structure: full(0.1, &[]), airlight: full(f64::NAN, &[]), adversarial: full(0.2, &[]) };
        match total_generator_loss(&terms, &LossWeights::default()) {
            Err(Error::NonFinite { term, .. }) => assert_eq!(term, "L_A"),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn adversarial_analytic_points() {
        let half = full(0.5, &[2, 1, 4, 4]);
        let d = s(&adversarial_loss_discriminator(&half, &half).unwrap());
        assert!((d - 2.0 * 2f64.ln()).abs() < 1e-12);
        let g = s(&adversarial_loss_generator(&half).unwrap());
        assert!((g - 2f64.ln()).abs() < 1e-12);

        let d = s(&adversarial_loss_discriminator(&full(0.9, &[1, 1, 2, 2]), &full(0.1, &[1, 1, 2, 2])).unwrap());
        assert!((d - 0.21072).abs() < 1e-5);
        let perfect = s(&adversarial_loss_discriminator(&full(1.0, &[1, 1, 2, 2]), &full(0.0, &[1, 1, 2, 2])).unwrap());
        assert!(perfect.abs() < 1e-6);

        assert_eq!(s(&adversarial_loss_generator(&full(1.0, &[1, 1, 2, 2])).unwrap()), 0.0);
        let e = s(&adversarial_loss_generator(&full((-1f64).exp(), &[1, 1, 2, 2])).unwrap());
        assert!((e - 1.0).abs() < 1e-12);
        // Saturated scores stay finite thanks to the clamp.
        assert!(s(&adversarial_loss_generator(&full(0.0, &[1, 1, 2, 2])).unwrap()).is_finite());
    }

    #[test]
    fn loss_weights_defaults_and_serde_names() {
        let w = LossWeights::default();
        assert_eq!((w.structure, w.airlight, w.adversarial), (1.0, 0.1, 1.0));
        assert_eq!((w.edge, w.luminance, w.smoothness), (0.25, 0.25, 1.0));
        assert_eq!((w.style, w.content), (0.1, 0.1));
        let json = serde_json::to_string(&w).unwrap();
        for key in ["lambda_S", "lambda_A", "lambda_adv", "lambda_e", "lambda_l", "lambda_smooth", "lambda_s", "lambda_c"] {
            assert!(json.contains(key), "{json}");
        }
        assert!(LossWeights { content: -1.0, ..w }.validate().is_err());
    }

    #[test]
    fn feature_taps_must_be_non_empty() {
        assert!(FeatureTaps::new(vec![], vec![Tap::Relu3_3]).is_err());
        let d = FeatureTaps::default();
        assert_eq!(d.style.len(), 4);
        assert_eq!(d.content, vec![Tap::Relu3_3]);
    }
}
