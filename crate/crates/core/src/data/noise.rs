use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Additive white Gaussian noise at a target SNR (dB) relative to the image's own power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub snr_db: f64,
}

impl NoiseSpec {
    pub fn new(snr_db: f64) -> Self {
        Self { snr_db }
    }

    /// Noise variance for an image of mean-square power `power`.
    pub fn variance(&self, power: f64) -> f64 {
        power * 10f64.powf(-self.snr_db / 10.0)
    }
}

/// Returns a noisy copy; the result is not clipped. Zero-power images pass through unchanged.
pub fn add_awgn<R: Rng + ?Sized>(image: &[f32], spec: &NoiseSpec, rng: &mut R) -> Vec<f32> {
    if image.is_empty() {
        return Vec::new();
    }
    let power = image.iter().map(|&p| (p as f64) * (p as f64)).sum::<f64>() / image.len() as f64;
    let sigma = spec.variance(power).sqrt();
    if power == 0.0 || !(sigma > 0.0 && sigma.is_finite()) {
        return image.to_vec();
    }
    let normal = Normal::new(0.0, sigma).expect("finite positive sigma");
    image.iter().map(|&p| (p as f64 + normal.sample(rng)) as f32).collect()
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn minus_ten_db_gives_ten_times_the_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let image: Vec<f32> = (0..20_000).map(|i| ((i * 7919) % 256) as f32 / 255.0).collect();
        let power = image.iter().map(|&p| (p as f64).powi(2)).sum::<f64>() / image.len() as f64;
        let noisy = add_awgn(&image, &NoiseSpec::new(-10.0), &mut rng);
        let noise_power =
            noisy.iter().zip(&image).map(|(n, p)| ((n - p) as f64).powi(2)).sum::<f64>() / image.len() as f64;
        let ratio = noise_power / (10.0 * power);
        assert!((ratio - 1.0).abs() < 0.05, "ratio {ratio}");
        // not clipped
        assert!(noisy.iter().any(|&v| !(0.0..=1.0).contains(&v)));
    }

    #[test]
    fn huge_snr_is_a_no_op() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let image = vec![0.25f32, 0.5, 1.0, 0.0];
        let noisy = add_awgn(&image, &NoiseSpec::new(300.0), &mut rng);
        for (a, b) in noisy.iter().zip(&image) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_image_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(add_awgn(&[0.0f32; 9], &NoiseSpec::new(-10.0), &mut rng), vec![0.0; 9]);
    }
}
