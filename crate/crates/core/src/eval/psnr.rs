use crate::error::{invalid, Result};
use crate::imaging::ImageTensor;

/// Peak signal-to-noise ratio in dB; identical images give `f64::INFINITY`.
pub fn psnr(a: &ImageTensor, b: &ImageTensor, peak: f64) -> Result<f64> {
    let shape = |i: &ImageTensor| (i.channels(), i.height(), i.width());
    if shape(a) != shape(b) {
        return Err(invalid(format!("psnr shape mismatch: {:?} vs {:?}", shape(a), shape(b))));
    }
    if !(peak > 0.0) {
        return Err(invalid(format!("psnr peak must be positive, got {peak}")));
    }
    let (va, vb) = (a.to_vec(), b.to_vec());
    let mse = va.iter().zip(&vb).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum::<f64>() / va.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_images_are_infinite() {
        let a = ImageTensor::filled(3, 4, 4, 0.3).unwrap();
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = ImageTensor::filled(3, 4, 4, 0.3).unwrap();
        let b = ImageTensor::filled(3, 4, 5, 0.3).unwrap();
        assert!(psnr(&a, &b, 1.0).is_err());
    }
}
