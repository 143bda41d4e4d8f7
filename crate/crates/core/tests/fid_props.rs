use hazerender_core::eval::{fid, SetStatistics};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian_samples(n: usize, k: usize, shift: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..k).map(|_| Distribution::<f64>::sample(&StandardNormal, rng) + shift).collect::<Vec<f64>>()).collect()
}

fn stats(samples: &[Vec<f64>]) -> SetStatistics {
    SetStatistics::from_samples(samples.iter().map(Vec::as_slice)).unwrap()
}

/// Random statistics with an SPD covariance `B B^T + 0.1 I`.
fn random_stats(k: usize) -> impl Strategy<Value = SetStatistics> {
    (prop::collection::vec(-2.0f64..2.0, k), prop::collection::vec(-1.0f64..1.0, k * k)).prop_map(move |(m, b)| {
        let b = DMatrix::from_vec(k, k, b);
        let cov = &b * b.transpose() + DMatrix::identity(k, k) * 0.1;
        SetStatistics { mean: DVector::from_vec(m), cov, count: 100 }
    })
}

#[test]
fn shifted_gaussians_converge_to_the_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let k = 16;
    let a = stats(&gaussian_samples(10_000, k, 0.0, &mut rng));
    let b = stats(&gaussian_samples(10_000, k, 1.0, &mut rng));
    let value = fid(&a, &b).unwrap();
    assert!((value - 16.0).abs() <= 0.02 * 16.0, "fid {value}");
}

#[test]
fn permuting_samples_does_not_change_statistics() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut samples = gaussian_samples(50, 4, 0.3, &mut rng);
    let a = stats(&samples);
    samples.reverse();
    let b = stats(&samples);
    assert_eq!(a.dim(), 4);
    assert!((&a.mean - &b.mean).abs().max() < 1e-12);
    assert!((&a.cov - &b.cov).abs().max() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fid_is_a_symmetric_non_negative_divergence(a in random_stats(5), b in random_stats(5)) {
        let ab = fid(&a, &b).unwrap();
        let ba = fid(&b, &a).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-8, "{ab} vs {ba}");
        prop_assert!(fid(&a, &a).unwrap() <= 1e-6);
    }
}
