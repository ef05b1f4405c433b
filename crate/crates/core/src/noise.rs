//! Multiplicative speckle: `J = I * eta`, with `eta ~ Gamma(L, 1/L)`.
//!
//! For an integer number of looks `L`, `eta` is the mean of `L` independent
//! unit exponentials, so `E[eta] = 1` and `Var[eta] = 1/L`.
//!
//! Random numbers come from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! [`NoiseSpec::seed`]. Pixel `p` consumes draws `p*L .. (p+1)*L` of the
//! stream in row-major order, so any sub-range of the field can be
//! regenerated by seeking the generator.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::ImageGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseSpec {
    pub looks: u32,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(looks: u32, seed: u64) -> Result<Self> {
        let spec = Self { looks, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.looks == 0 {
            return Err(Error::param("looks", "number of looks must be >= 1"));
        }
        Ok(())
    }
}

/// Endless stream of `Gamma(L, 1/L)` variates.
pub struct SpeckleSampler {
    looks: u32,
    rng: ChaCha8Rng,
}

impl SpeckleSampler {
    pub fn new(spec: NoiseSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            looks: spec.looks,
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
        })
    }

    pub fn sample(&mut self) -> f64 {
        // Open01 excludes 0, so every term is finite and strictly positive.
        let mut sum = 0.0;
        for _ in 0..self.looks {
            let u: f64 = self.rng.sample(Open01);
            sum -= u.ln();
        }
        sum / self.looks as f64
    }
}

pub fn sample_speckle_field(spec: NoiseSpec, width: usize, height: usize) -> Result<ImageGrid> {
    let mut sampler = SpeckleSampler::new(spec)?;
    let data = (0..width * height).map(|_| sampler.sample()).collect();
    ImageGrid::new(width, height, data)
}

/// Pixelwise product `clean * eta`, without clipping.
pub fn apply_multiplicative(clean: &ImageGrid, eta: &ImageGrid) -> Result<ImageGrid> {
    clean.ensure_same_dims(eta)?;
    let data = clean.data().iter().zip(eta.data()).map(|(c, n)| c * n).collect();
    Ok(clean.like(data))
}

/// Samples a field matching `clean` and applies it.
pub fn add_speckle(clean: &ImageGrid, spec: NoiseSpec) -> Result<ImageGrid> {
    let eta = sample_speckle_field(spec, clean.width(), clean.height())?;
    apply_multiplicative(clean, &eta)
}
