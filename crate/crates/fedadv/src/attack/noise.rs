//! Additive Gaussian pixel noise, the non-gradient corruption baseline.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Adds N(mu, sigma^2) to every pixel and clips back to [0, 1].
/// `sigma = 0` degenerates to a constant shift by `mu`.
pub fn gaussian_noise(x: &Tensor, mu: f64, sigma: f64, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::config("sigma", format!("must be >= 0, got {sigma}")));
    }
    if !mu.is_finite() {
        return Err(Error::config("mu", format!("must be finite, got {mu}")));
    }
    let mut out = x.clone();
    if sigma == 0.0 {
        for v in &mut out.data {
            *v += mu;
        }
    } else {
        let dist = Normal::new(mu, sigma).expect("checked above");
        for v in &mut out.data {
            *v += dist.sample(rng);
        }
    }
    out.clamp_in_place(0.0, 1.0);
    Ok(out)
}

/// Draws a standard-normal vector scaled and shifted, without the pixel
/// clip. Used by data generators that want raw Gaussian features.
pub fn fill_gaussian(out: &mut [f64], mu: f64, sigma: f64, rng: &mut ChaCha8Rng) {
    if sigma == 0.0 {
        out.fill(mu);
        return;
    }
    let dist = Normal::new(mu, sigma).expect("generator sigma must be >= 0");
    for v in out {
        *v = dist.sample(rng);
    }
}

/// Uniform draw in [lo, hi] for every element.
pub fn fill_uniform(out: &mut [f64], lo: f64, hi: f64, rng: &mut ChaCha8Rng) {
    for v in out {
        *v = rng.random_range(lo..=hi);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derived_rng;

    #[test]
    fn sigma_zero_is_a_pure_shift() {
        let x = Tensor::from_vec(&[1, 4], vec![0.1, 0.5, 0.9, 0.0]).unwrap();
        let mut rng = derived_rng(1, &[1]);
        let out = gaussian_noise(&x, 0.25, 0.0, &mut rng).unwrap();
        assert_eq!(out.data, vec![0.35, 0.75, 1.0, 0.25]);
        let same = gaussian_noise(&x, 0.0, 0.0, &mut rng).unwrap();
        assert_eq!(same.data, x.data);
    }

    #[test]
    fn sample_moments_match_parameters() {
        // Wide box so the clip never bites: center 0.5, sigma 0.05.
        let n = 200_000;
        let x = Tensor::from_vec(&[1, n], vec![0.5; n]).unwrap();
        let mut rng = derived_rng(42, &[2]);
        let out = gaussian_noise(&x, 0.01, 0.05, &mut rng).unwrap();
        let mean = out.data.iter().sum::<f64>() / n as f64;
        let var = out.data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        assert!((mean - 0.51).abs() < 1e-3, "mean {mean}");
        assert!((var.sqrt() - 0.05).abs() < 1e-3, "std {}", var.sqrt());
    }

    #[test]
    fn output_is_clipped_and_deterministic_per_stream() {
        let x = Tensor::from_vec(&[2, 3], vec![0.0, 1.0, 0.5, 0.02, 0.98, 0.4]).unwrap();
        let a = gaussian_noise(&x, 0.0, 0.8, &mut derived_rng(7, &[3])).unwrap();
        let b = gaussian_noise(&x, 0.0, 0.8, &mut derived_rng(7, &[3])).unwrap();
        assert_eq!(a.data, b.data);
        assert!(a.data.iter().all(|v| (0.0..=1.0).contains(v)));
        let c = gaussian_noise(&x, 0.0, 0.8, &mut derived_rng(8, &[3])).unwrap();
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn rejects_bad_parameters() {
        let x = Tensor::from_vec(&[1, 1], vec![0.5]).unwrap();
        let mut rng = derived_rng(0, &[4]);
        assert!(gaussian_noise(&x, 0.0, -0.1, &mut rng).is_err());
        assert!(gaussian_noise(&x, f64::NAN, 0.1, &mut rng).is_err());
    }
}
