//! Band-limited procedural textures with exactly known displacement, for
//! calibrating estimators and building synthetic benchmark corpora.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::imageio::GrayImage;

#[derive(Debug, Clone)]
struct Wave {
    kx: f64,
    ky: f64,
    phase: f64,
    amp: f64,
}

/// A sum of random plane waves; continuous, so it can be sampled at any
/// sub-pixel offset without interpolation error.
#[derive(Debug, Clone)]
pub struct Texture {
    waves: Vec<Wave>,
    norm: f64,
}

impl Texture {
    /// Twelve waves with wavelengths between 8 and 24 pixels.
    pub fn band_limited(seed: u64) -> Self {
        Self::with_wavelengths(seed, 8.0, 24.0)
    }

    /// Twelve waves with wavelengths drawn uniformly from `[min, max)`.
    /// Longer wavelengths survive more pyramid levels without aliasing.
    pub fn with_wavelengths(seed: u64, min: f64, max: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves: Vec<Wave> = (0..12)
            .map(|_| {
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                let wavelength = rng.random_range(min..max);
                let k = std::f64::consts::TAU / wavelength;
                Wave {
                    kx: k * angle.cos(),
                    ky: k * angle.sin(),
                    phase: rng.random_range(0.0..std::f64::consts::TAU),
                    amp: rng.random_range(0.5..1.0),
                }
            })
            .collect();
        let norm = waves.iter().map(|w| w.amp).sum();
        Self { waves, norm }
    }

    /// Intensity in `[0.05, 0.95]` at a continuous position.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let s: f64 = self
            .waves
            .iter()
            .map(|w| w.amp * (w.kx * x + w.ky * y + w.phase).sin())
            .sum();
        0.5 + 0.45 * s / self.norm
    }

    /// Render the texture translated by `(dx, dy)`: the flow from
    /// `render(w, h, 0, 0)` to `render(w, h, dx, dy)` is exactly `(dx, dy)`.
    pub fn render(&self, width: usize, height: usize, dx: f64, dy: f64) -> GrayImage {
        GrayImage::from_fn(width, height, |x, y| self.sample(x as f64 - dx, y as f64 - dy))
    }
}
