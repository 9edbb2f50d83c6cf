//! Synthetic forest scenes with planted clearings and a known change mask.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::raster::{ChangeMask, ImagePair, Provenance, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl Rect {
    pub fn square(row: usize, col: usize, side: usize) -> Self {
        Self {
            row,
            col,
            height: side,
            width: side,
        }
    }

    fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.row && row < self.row + self.height && col >= self.col && col < self.col + self.width
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Areas where canopy is replaced by bare soil in the second epoch.
    pub clearings: Vec<Rect>,
    /// Standard deviation of additive Gaussian noise on the 8-bit scale.
    pub noise_sigma: f64,
    /// Uniform brightness offset applied to the second epoch.
    pub illumination_shift: i16,
    pub seed: u64,
}

impl SceneSpec {
    pub fn new(width: usize, height: usize, clearings: Vec<Rect>) -> Self {
        Self {
            width,
            height,
            clearings,
            noise_sigma: 0.0,
            illumination_shift: 0,
            seed: 7,
        }
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_illumination_shift(mut self, shift: i16) -> Self {
        self.illumination_shift = shift;
        self
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub pair: ImagePair,
    pub truth: ChangeMask,
}

impl SyntheticPair {
    pub fn change_percent(&self) -> f64 {
        crate::analytics::percent(self.truth.changed_pixels(), self.truth.labels().len())
    }
}

fn clamp_u8(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Renders a textured canopy for both epochs, replaces the clearings with soil
/// in the second one and adds independent noise to each epoch.
pub fn forest_pair(spec: &SceneSpec, id: &str) -> SyntheticPair {
    let (w, h) = (spec.width, spec.height);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut a = Vec::with_capacity(w * h * 3);
    let mut b = Vec::with_capacity(w * h * 3);
    let mut truth = vec![0u8; w * h];
    let noise = (spec.noise_sigma > 0.0).then(|| Normal::new(0.0, spec.noise_sigma).expect("finite sigma"));
    let shift = spec.illumination_shift as f64;

    for y in 0..h {
        for x in 0..w {
            // low-frequency canopy shading plus per-pixel jitter
            let shade = 12.0 * ((x as f64 / 9.0).sin() * (y as f64 / 13.0).cos());
            let jitter: f64 = rng.random_range(-6.0..6.0);
            let canopy = [45.0 + 0.4 * shade + jitter, 120.0 + shade + jitter, 40.0 + 0.3 * shade];
            let soil_jitter: f64 = rng.random_range(-5.0..5.0);
            let soil = [140.0 + soil_jitter, 105.0 + soil_jitter, 75.0 + 0.5 * soil_jitter];

            let cleared = spec.clearings.iter().any(|r| r.contains(y, x));
            truth[y * w + x] = u8::from(cleared);
            let after = if cleared { soil } else { canopy };
            for c in 0..3 {
                let (na, nb) = match &noise {
                    Some(n) => (n.sample(&mut rng), n.sample(&mut rng)),
                    None => (0.0, 0.0),
                };
                a.push(clamp_u8(canopy[c] + na));
                b.push(clamp_u8(after[c] + shift + nb));
            }
        }
    }
    let a = Raster::new(w, h, 3, a).expect("valid synthetic dims");
    let b = Raster::new(w, h, 3, b).expect("valid synthetic dims");
    SyntheticPair {
        pair: ImagePair::new(id, a, b).expect("equal shapes"),
        truth: ChangeMask::from_labels(w, h, truth, Provenance::GroundTruth).expect("valid synthetic dims"),
    }
}
