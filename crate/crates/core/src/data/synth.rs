//! Synthetic stand-in for GAN output: smooth noise textures, with fakes
//! carrying a periodic or band-limited spectral artifact.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LabeledImage;
use crate::classifier::{FAKE, REAL};
use crate::error::{Error, Result};
use crate::spectral::{centered_offset, inverse_planes};
use crate::tensor::{ImageTensor, Tensor3};

/// Pixel standard deviation of the base texture before clamping.
const TEXTURE_STD: f64 = 0.25;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArtifactFamily {
    #[default]
    None,
    Checkerboard,
    Grid,
    Ring,
}

impl ArtifactFamily {
    pub fn name(self) -> &'static str {
        match self {
            ArtifactFamily::None => "none",
            ArtifactFamily::Checkerboard => "checkerboard",
            ArtifactFamily::Grid => "grid",
            ArtifactFamily::Ring => "ring",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticArtifactSpec {
    pub family: ArtifactFamily,
    pub amplitude: f64,
    /// Radius interval `[lo, hi]` in frequency bins; ring family only.
    pub radial_band: (f64, f64),
    /// Period in pixels; checkerboard and grid families only.
    pub period: usize,
    pub base_texture_seed: u64,
}

impl Default for SyntheticArtifactSpec {
    fn default() -> Self {
        Self {
            family: ArtifactFamily::None,
            amplitude: 0.0,
            radial_band: (0.0, 0.0),
            period: 2,
            base_texture_seed: 0,
        }
    }
}

impl SyntheticArtifactSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn checkerboard(period: usize, amplitude: f64) -> Self {
        Self { family: ArtifactFamily::Checkerboard, amplitude, period, ..Self::default() }
    }

    pub fn grid(period: usize, amplitude: f64) -> Self {
        Self { family: ArtifactFamily::Grid, amplitude, period, ..Self::default() }
    }

    pub fn ring(radial_band: (f64, f64), amplitude: f64) -> Self {
        Self { family: ArtifactFamily::Ring, amplitude, radial_band, ..Self::default() }
    }

    /// Ring band covering 60–90% of the maximum radius of a `size` image.
    pub fn default_ring_band(size: usize) -> (f64, f64) {
        let r = (size / 2) as f64;
        (0.6 * r, 0.9 * r)
    }

    pub fn with_base_texture_seed(mut self, seed: u64) -> Self {
        self.base_texture_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.amplitude.is_finite() || self.amplitude < 0.0 {
            return Err(Error::Config(format!("amplitude {} must be finite and >= 0", self.amplitude)));
        }
        if self.period < 2 {
            return Err(Error::Config(format!("period {} must be >= 2", self.period)));
        }
        if self.family == ArtifactFamily::Ring {
            let (lo, hi) = self.radial_band;
            if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo <= hi) {
                return Err(Error::Config(format!("invalid ring band [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5EED, |acc, &p| splitmix(acc ^ splitmix(p)))
}

/// Real image whose spectrum has magnitude `magnitude(du, dv)` at every
/// coefficient and uniformly random phase (Hermitian symmetric).
fn random_phase_plane(size: usize, rng: &mut ChaCha8Rng, magnitude: impl Fn(i64, i64) -> f64) -> Vec<f64> {
    let n = size * size;
    let mut planes = Tensor3::zeros(2, size, size);
    for u in 0..size {
        for v in 0..size {
            let i = u * size + v;
            let j = ((size - u) % size) * size + (size - v) % size;
            if j < i {
                continue;
            }
            let a = magnitude(centered_offset(u, size), centered_offset(v, size));
            if j == i {
                planes.data[i] = if rng.random::<bool>() { a } else { -a };
            } else {
                let (s, c) = (2.0 * PI * rng.random::<f64>()).sin_cos();
                planes.data[i] = a * c;
                planes.data[n + i] = a * s;
                planes.data[j] = a * c;
                planes.data[n + j] = -a * s;
            }
        }
    }
    inverse_planes(&planes).0.data
}

fn texture_envelope(du: i64, dv: i64, cutoff: f64) -> f64 {
    let r2 = (du * du + dv * dv) as f64;
    1.0 / (1.0 + r2 / (cutoff * cutoff))
}

/// Low-pass noise texture with pixel RMS `TEXTURE_STD`. Per-coefficient
/// power is fixed, so every texture has the same radial profile.
fn base_texture(size: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let cutoff = size as f64 / 8.0;
    let mut energy = 0.0;
    for u in 0..size {
        for v in 0..size {
            energy += texture_envelope(centered_offset(u, size), centered_offset(v, size), cutoff).powi(2);
        }
    }
    // Orthonormal transform: mean square of the pixels is energy / n.
    let scale = TEXTURE_STD * ((size * size) as f64 / energy).sqrt();
    random_phase_plane(size, rng, |du, dv| scale * texture_envelope(du, dv, cutoff))
}

fn artifact(spec: &SyntheticArtifactSpec, size: usize, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
    let a = spec.amplitude;
    let p = spec.period as f64;
    let wave = |i: usize| (2.0 * PI * i as f64 / p).cos();
    match spec.family {
        ArtifactFamily::None => None,
        ArtifactFamily::Checkerboard => {
            Some((0..size * size).map(|k| a * wave(k / size) * wave(k % size)).collect())
        }
        ArtifactFamily::Grid => {
            Some((0..size * size).map(|k| 0.5 * a * (wave(k / size) + wave(k % size))).collect())
        }
        ArtifactFamily::Ring => {
            let (lo, hi) = spec.radial_band;
            let in_band = |du: i64, dv: i64| {
                let r = ((du * du + dv * dv) as f64).sqrt();
                r >= lo && r <= hi
            };
            let mut count = 0usize;
            for u in 0..size {
                for v in 0..size {
                    if in_band(centered_offset(u, size), centered_offset(v, size)) {
                        count += 1;
                    }
                }
            }
            if count == 0 {
                return Some(vec![0.0; size * size]);
            }
            // Pixel mean square a^2 / 2, matching a unit-amplitude sinusoid.
            let m = a * ((size * size) as f64 / (2.0 * count as f64)).sqrt();
            Some(random_phase_plane(size, rng, |du, dv| if in_band(du, dv) { m } else { 0.0 }))
        }
    }
}

fn synth_image(
    spec: &SyntheticArtifactSpec,
    size: usize,
    channels: usize,
    seed: u64,
    label: u8,
    index: usize,
) -> Result<ImageTensor> {
    let mut data = Vec::with_capacity(channels * size * size);
    for c in 0..channels {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[
            seed,
            spec.base_texture_seed,
            u64::from(label),
            index as u64,
            c as u64,
        ]));
        let mut plane = base_texture(size, &mut rng);
        if let Some(extra) = artifact(spec, size, &mut rng) {
            for (p, e) in plane.iter_mut().zip(extra) {
                *p += e;
            }
        }
        data.extend(plane.into_iter().map(|v| v.clamp(-1.0, 1.0)));
    }
    ImageTensor::new(size, size, channels, data)
}

/// Single-channel toy dataset: `n_per_class` reals, then as many fakes.
pub fn synthesize_toy_dataset(
    spec_real: &SyntheticArtifactSpec,
    spec_fake: &SyntheticArtifactSpec,
    n_per_class: usize,
    size: usize,
    seed: u64,
) -> Result<Vec<LabeledImage>> {
    synthesize_toy_dataset_with_channels(spec_real, spec_fake, n_per_class, size, 1, seed)
}

pub fn synthesize_toy_dataset_with_channels(
    spec_real: &SyntheticArtifactSpec,
    spec_fake: &SyntheticArtifactSpec,
    n_per_class: usize,
    size: usize,
    channels: usize,
    seed: u64,
) -> Result<Vec<LabeledImage>> {
    spec_real.validate()?;
    spec_fake.validate()?;
    if spec_real.family != ArtifactFamily::None {
        return Err(Error::Config("real images must not carry an artifact".into()));
    }
    if n_per_class == 0 {
        return Err(Error::Config("n_per_class must be >= 1".into()));
    }
    if size < 2 || !size.is_multiple_of(2) {
        return Err(Error::Config(format!("size {size} must be even and >= 2")));
    }
    if channels != 1 && channels != 3 {
        return Err(Error::Config(format!("unsupported channel count {channels}")));
    }
    let jobs: Vec<(u8, usize)> = (0..n_per_class)
        .map(|i| (REAL, i))
        .chain((0..n_per_class).map(|i| (FAKE, i)))
        .collect();
    crate::parallel::try_map(&jobs, |&(label, index)| {
        let spec = if label == REAL { spec_real } else { spec_fake };
        let image = synth_image(spec, size, channels, seed, label, index)?;
        let tag = if label == REAL { "real".to_string() } else { spec.family.name().to_string() };
        Ok(LabeledImage { image, label, source_tag: tag })
    })
}
