use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Gaussian blobs, one per class, reshaped into square pseudo-images.
///
/// Class `c` has mean `separation / sqrt(2) * e_c`, so every pair of means is
/// exactly `separation` apart. `dim` must be a perfect square and `>= classes`.
pub fn synth_blobs<R: Rng + ?Sized>(
    classes: usize,
    dim: usize,
    separation: f64,
    noise_sigma: f64,
    n: usize,
    rng: &mut R,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::invalid("need at least 2 classes"));
    }
    if classes > 256 {
        return Err(Error::invalid("at most 256 classes"));
    }
    let side = (dim as f64).sqrt().round() as usize;
    if side * side != dim || dim < classes {
        return Err(Error::invalid(format!("dim {dim} must be a perfect square >= {classes}")));
    }
    if noise_sigma.is_nan() || noise_sigma < 0.0 || !separation.is_finite() {
        return Err(Error::invalid("noise sigma must be >= 0 and separation finite"));
    }
    let offset = separation / std::f64::consts::SQRT_2;
    let mut labels: Vec<u8> = (0..n).map(|i| (i % classes) as u8).collect();
    labels.shuffle(rng);
    let normal = (noise_sigma > 0.0).then(|| Normal::new(0.0, noise_sigma).expect("valid sigma"));
    let mut images = Vec::with_capacity(n * dim);
    for &label in &labels {
        for d in 0..dim {
            let mean = if d == label as usize { offset } else { 0.0 };
            let noise = normal.as_ref().map_or(0.0, |nd| nd.sample(rng));
            images.push((mean + noise) as f32);
        }
    }
    Dataset::new(side, side, classes, images, labels)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn nearest_mean_accuracy(ds: &Dataset, separation: f64) -> f64 {
        let offset = separation / std::f64::consts::SQRT_2;
        let correct = (0..ds.len())
            .filter(|&i| {
                let x = ds.image(i);
                let dist = |c: usize| -> f64 {
                    x.iter()
                        .enumerate()
                        .map(|(d, &v)| {
                            let m = if d == c { offset } else { 0.0 };
                            (v as f64 - m).powi(2)
                        })
                        .sum()
                };
                (0..ds.classes()).min_by(|&a, &b| dist(a).total_cmp(&dist(b))) == Some(ds.label(i))
            })
            .count();
        correct as f64 / ds.len() as f64
    }

    #[test]
    fn noiseless_blobs_are_separable() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ds = synth_blobs(4, 16, 3.0, 0.0, 200, &mut rng).unwrap();
        assert_eq!(nearest_mean_accuracy(&ds, 3.0), 1.0);
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let a = synth_blobs(3, 9, 2.0, 0.5, 50, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = synth_blobs(3, 9, 2.0, 0.5, 50, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.height(), a.width()), (3, 3));
    }

    #[test]
    fn monte_carlo_accuracy_matches_gaussian_error() {
        use statrs::distribution::{ContinuousCDF, Normal as StdNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (sep, sigma) = (8.0, 1.0);
        let ds = synth_blobs(2, 16, sep, sigma, 1000, &mut rng).unwrap();
        let acc = nearest_mean_accuracy(&ds, sep);
        // two classes: error = Phi(-sep / (2 sigma))
        let expected = 1.0 - StdNormal::new(0.0, 1.0).unwrap().cdf(-sep / (2.0 * sigma));
        assert!(expected > 0.9999);
        assert!(acc > 0.99, "accuracy {acc}");
        // 1000 draws at p_err ~ 3e-5: at most a couple of errors
        assert!((acc - expected).abs() < 0.005);
    }

    #[test]
    fn rejects_bad_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(synth_blobs(1, 16, 1.0, 1.0, 10, &mut rng).is_err());
        assert!(synth_blobs(2, 15, 1.0, 1.0, 10, &mut rng).is_err());
        assert!(synth_blobs(5, 4, 1.0, 1.0, 10, &mut rng).is_err());
    }
}
