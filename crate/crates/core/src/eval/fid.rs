//! Fréchet distance between Gaussian fits of deep-feature statistics.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Error, Result};
use crate::imaging::ImageTensor;
use crate::nn::{FeatureBackbone, Tap};

/// Maps an image to a fixed-length feature vector.
pub trait FeatureExtractor {
    /// Identifies the feature source; FID values are only comparable
    /// between runs with the same id.
    fn id(&self) -> String;
    fn dim(&self) -> usize;
    fn features(&self, img: &ImageTensor) -> Result<Vec<f64>>;
}

/// Spatially averaged backbone activations at one tap.
#[derive(Debug, Clone)]
pub struct PooledTap {
    backbone: Arc<FeatureBackbone>,
    tap: Tap,
}

impl PooledTap {
    pub fn new(backbone: Arc<FeatureBackbone>, tap: Tap) -> Self {
        Self { backbone, tap }
    }
}

impl FeatureExtractor for PooledTap {
    fn id(&self) -> String {
        format!("{}:{}:mean", self.backbone.id(), self.tap)
    }

    fn dim(&self) -> usize {
        self.backbone.channels(self.tap)
    }

    fn features(&self, img: &ImageTensor) -> Result<Vec<f64>> {
        let act = self.backbone.extract_features(img, &[self.tap])?.remove(0);
        let pooled = act.mean((2, 3))?.flatten_all()?.to_dtype(candle_core::DType::F64)?;
        Ok(pooled.to_vec1::<f64>()?)
    }
}

/// Running count, sum and sum of outer products. Merging is commutative, so
/// partial accumulators can be built independently and combined.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsAccumulator {
    count: usize,
    sum: DVector<f64>,
    outer: DMatrix<f64>,
}

impl StatsAccumulator {
    pub fn new(dim: usize) -> Self {
        Self { count: 0, sum: DVector::zeros(dim), outer: DMatrix::zeros(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.sum.len()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn push(&mut self, sample: &[f64]) -> Result<()> {
        if sample.len() != self.dim() {
            return Err(invalid(format!("feature has {} entries, expected {}", sample.len(), self.dim())));
        }
        let v = DVector::from_column_slice(sample);
        self.outer.ger(1.0, &v, &v, 1.0);
        self.sum += v;
        self.count += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if other.dim() != self.dim() {
            return Err(invalid("cannot merge statistics of different dimensions"));
        }
        self.count += other.count;
        self.sum += &other.sum;
        self.outer += &other.outer;
        Ok(())
    }

    /// Mean and unbiased covariance.
    pub fn finish(&self) -> Result<SetStatistics> {
        if self.count < 2 {
            return Err(Error::Data(format!("set statistics need at least 2 samples, got {}", self.count)));
        }
        let n = self.count as f64;
        let mean = &self.sum / n;
        let mut cov = (&self.outer - &mean * mean.transpose() * n) / (n - 1.0);
        cov = (&cov + cov.transpose()) * 0.5;
        Ok(SetStatistics { mean, cov, count: self.count })
    }
}

/// Mean vector and covariance of a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct SetStatistics {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub count: usize,
}

impl SetStatistics {
    pub fn from_samples<'a>(samples: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut samples = samples.into_iter().peekable();
        let dim = samples.peek().map_or(0, |s| s.len());
        let mut acc = StatsAccumulator::new(dim);
        for s in samples {
            acc.push(s)?;
        }
        acc.finish()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Statistics of `extractor` features over `images`.
pub fn compute_set_statistics(images: &[ImageTensor], extractor: &dyn FeatureExtractor) -> Result<SetStatistics> {
    let mut acc = StatsAccumulator::new(extractor.dim());
    for img in images {
        acc.push(&extractor.features(img)?)?;
    }
    acc.finish()
}

/// Symmetric positive semidefinite square root, negative eigenvalues
/// clamped to zero.
fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// `tr((a b)^(1/2))` computed as `tr((a^(1/2) b a^(1/2))^(1/2))`.
fn trace_sqrt_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let ra = psd_sqrt(a);
    let inner = &ra * b * &ra;
    let inner = (&inner + inner.transpose()) * 0.5;
    SymmetricEigen::new(inner).eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum()
}

/// `|mu1 - mu2|^2 + tr(S1 + S2 - 2 (S1 S2)^(1/2))`.
pub fn fid(s1: &SetStatistics, s2: &SetStatistics) -> Result<f64> {
    if s1.dim() != s2.dim() {
        return Err(invalid(format!("fid dimension mismatch: {} vs {}", s1.dim(), s2.dim())));
    }
    let diff = (&s1.mean - &s2.mean).norm_squared();
    // Both orderings give the same trace; averaging them makes the result
    // symmetric to the last bit.
    let cross = 0.5 * (trace_sqrt_product(&s1.cov, &s2.cov) + trace_sqrt_product(&s2.cov, &s1.cov));
    let value = diff + s1.cov.trace() + s2.cov.trace() - 2.0 * cross;
    Ok(value.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(mean: Vec<f64>, cov: DMatrix<f64>) -> SetStatistics {
        SetStatistics { mean: DVector::from_vec(mean), cov, count: 10 }
    }

    #[test]
    fn unit_shift_with_identity_covariance_is_dimension() {
        let k = 5;
        let a = stats(vec![0.0; k], DMatrix::identity(k, k));
        let b = stats(vec![1.0; k], DMatrix::identity(k, k));
        assert!((fid(&a, &b).unwrap() - k as f64).abs() < 1e-10);
    }

    #[test]
    fn duplicated_sample_has_zero_covariance() {
        let s = SetStatistics::from_samples([&[1.0, 2.0][..], &[1.0, 2.0][..]]).unwrap();
        assert_eq!(s.cov, DMatrix::zeros(2, 2));
    }

    #[test]
    fn fewer_than_two_samples_is_a_data_error() {
        assert!(matches!(SetStatistics::from_samples([&[1.0][..]]), Err(Error::Data(_))));
    }

    #[test]
    fn merged_accumulators_equal_a_single_pass() {
        let samples: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64, (i * i) as f64 * 0.1, 1.0 - i as f64]).collect();
        let mut whole = StatsAccumulator::new(3);
        let (mut left, mut right) = (StatsAccumulator::new(3), StatsAccumulator::new(3));
        for (i, s) in samples.iter().enumerate() {
            whole.push(s).unwrap();
            if i % 2 == 0 { left.push(s) } else { right.push(s) }.unwrap();
        }
        right.merge(&left).unwrap();
        let (a, b) = (whole.finish().unwrap(), right.finish().unwrap());
        assert!((a.cov - b.cov).abs().max() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let a = stats(vec![0.0; 2], DMatrix::identity(2, 2));
        let b = stats(vec![0.0; 3], DMatrix::identity(3, 3));
        assert!(fid(&a, &b).is_err());
    }
}
