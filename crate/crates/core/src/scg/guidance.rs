use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Norm below which a vector cannot be normalized.
pub const ZERO_NORM: f64 = 1e-12;

fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm.is_finite() && norm >= ZERO_NORM {
        Some(v.iter().map(|x| x / norm).collect())
    } else {
        None
    }
}

/// Unit-length guidance vector from a level-1 posterior. During training
/// Gaussian noise (`sigma` > 0) is added between two normalizations; if the
/// noisy vector collapses it is resampled once before giving up.
pub fn guidance_feature<R: Rng + ?Sized>(p1: &[f64], sigma: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidConfig(format!("guidance noise {sigma} must be >= 0")));
    }
    let base = normalized(p1).ok_or(Error::ZeroVector)?;
    if sigma == 0.0 {
        return Ok(base);
    }
    let noise = Normal::new(0.0, sigma).expect("valid sigma");
    for _ in 0..2 {
        let noisy: Vec<f64> = base.iter().map(|b| b + noise.sample(rng)).collect();
        if let Some(g) = normalized(&noisy) {
            return Ok(g);
        }
    }
    Err(Error::ZeroVector)
}

/// Localization confidence: product of the two levels' peak probabilities.
pub fn confidence(p1: &[f64], p2: &[f64]) -> f64 {
    let peak = |p: &[f64]| p.iter().copied().fold(0.0, f64::max);
    peak(p1) * peak(p2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn noiseless_guidance_is_normalized_posterior() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = guidance_feature(&[0.6, 0.8, 0.0], 0.0, &mut rng).unwrap();
        assert_eq!(g, vec![0.6, 0.8, 0.0]);
        let u = guidance_feature(&[0.25; 4], 0.0, &mut rng).unwrap();
        assert!(u.iter().all(|v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn noisy_guidance_has_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let g = guidance_feature(&[0.1, 0.2, 0.7], 0.1, &mut rng).unwrap();
            let n: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_vector_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(guidance_feature(&[0.0; 4], 0.1, &mut rng), Err(Error::ZeroVector)));
    }

    #[test]
    fn confidence_is_product_of_peaks() {
        assert!((confidence(&[0.9, 0.1], &[0.2, 0.8]) - 0.72).abs() < 1e-15);
        assert!((confidence(&[0.25; 4], &[0.25; 4]) - 0.0625).abs() < 1e-15);
    }
}
