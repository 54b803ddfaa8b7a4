use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Image;
use crate::error::{invalid, Result};

/// Noise magnitude: per-pixel standard deviation or total Frobenius norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseLevel {
    Std(f64),
    Frobenius(f64),
}

/// White Gaussian noise with a deterministic seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub level: NoiseLevel,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn std(eta: f64, seed: u64) -> Self {
        Self {
            level: NoiseLevel::Std(eta),
            seed,
        }
    }

    pub fn frobenius(norm: f64, seed: u64) -> Self {
        Self {
            level: NoiseLevel::Frobenius(norm),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let v = match self.level {
            NoiseLevel::Std(v) | NoiseLevel::Frobenius(v) => v,
        };
        if !(v >= 0.0 && v.is_finite()) {
            return Err(invalid(format!("noise level must be finite and nonnegative, got {v}")));
        }
        Ok(())
    }
}

/// Returns `(x + e, e)` for one channel.
///
/// With a Frobenius target the white draw is rescaled so `‖e‖_F` hits it exactly.
pub fn add_noise(x: &DMatrix<f64>, spec: &NoiseSpec) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    spec.validate()?;
    let (m, n) = x.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let e = match spec.level {
        NoiseLevel::Std(0.0) => DMatrix::zeros(m, n),
        NoiseLevel::Frobenius(0.0) => DMatrix::zeros(m, n),
        NoiseLevel::Std(eta) => white(&mut rng, m, n) * eta,
        NoiseLevel::Frobenius(f) => {
            let w = white(&mut rng, m, n);
            let norm = w.norm();
            w * (f / norm)
        }
    };
    Ok((x + &e, e))
}

/// Channel-wise noise for a full image. Channel `c` uses seed `seed + c`; a
/// Frobenius target is split evenly in energy across channels.
pub fn add_noise_image(x: &Image, spec: &NoiseSpec) -> Result<(Image, Image)> {
    let channels = x.channel_count() as f64;
    let per_channel = |c: usize| NoiseSpec {
        level: match spec.level {
            NoiseLevel::Std(v) => NoiseLevel::Std(v),
            NoiseLevel::Frobenius(f) => NoiseLevel::Frobenius(f / channels.sqrt()),
        },
        seed: spec.seed.wrapping_add(c as u64),
    };
    let mut noisy = Vec::new();
    let mut noise = Vec::new();
    for (c, ch) in x.channels().iter().enumerate() {
        let (y, e) = add_noise(ch, &per_channel(c))?;
        noisy.push(y);
        noise.push(e);
    }
    Ok((Image::new(noisy)?, Image::new(noise)?))
}

fn white(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| StandardNormal.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_leaves_image() {
        let x = DMatrix::from_fn(4, 4, |i, j| (i + j) as f64 / 8.0);
        let (y, e) = add_noise(&x, &NoiseSpec::std(0.0, 1)).unwrap();
        assert_eq!(y, x);
        assert!(e.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn frobenius_target_is_exact() {
        let x = DMatrix::zeros(31, 31);
        let (_, e) = add_noise(&x, &NoiseSpec::frobenius(0.005, 7)).unwrap();
        assert!((e.norm() - 0.005).abs() < 1e-12);
    }

    #[test]
    fn sample_mean_is_near_zero() {
        let x = DMatrix::zeros(400, 250);
        let eta = 0.3;
        let (_, e) = add_noise(&x, &NoiseSpec::std(eta, 11)).unwrap();
        let n = e.len() as f64;
        let se = eta / n.sqrt();
        assert!(e.mean().abs() < 4.0 * se);
    }

    #[test]
    fn negative_level_rejected() {
        let x = DMatrix::zeros(2, 2);
        assert!(add_noise(&x, &NoiseSpec::std(-1.0, 0)).is_err());
    }

    #[test]
    fn seeded_draws_repeat() {
        let x = DMatrix::zeros(5, 5);
        let a = add_noise(&x, &NoiseSpec::std(0.1, 3)).unwrap().1;
        let b = add_noise(&x, &NoiseSpec::std(0.1, 3)).unwrap().1;
        assert_eq!(a, b);
    }
}
