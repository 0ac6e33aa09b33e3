//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use frepgan::ImageTensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform `[-1, 1]` pixels.
pub fn random_image(h: usize, w: usize, c: usize, seed: u64) -> ImageTensor {
    let mut r = rng(seed);
    let data = (0..h * w * c).map(|_| r.random_range(-1.0..=1.0)).collect();
    ImageTensor::new(h, w, c, data).unwrap()
}

/// Direct double-loop DFT with `1/sqrt(hw)` scaling.
pub fn brute_dft(plane: &[f64], h: usize, w: usize) -> Vec<(f64, f64)> {
    let scale = 1.0 / ((h * w) as f64).sqrt();
    let mut out = Vec::with_capacity(h * w);
    for u in 0..h {
        for v in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let phase = -2.0 * PI * ((u * y) as f64 / h as f64 + (v * x) as f64 / w as f64);
                    re += plane[y * w + x] * phase.cos();
                    im += plane[y * w + x] * phase.sin();
                }
            }
            out.push((re * scale, im * scale));
        }
    }
    out
}

/// Direct inverse DFT with `1/sqrt(hw)` scaling; returns complex pixels.
pub fn brute_idft(coeffs: &[(f64, f64)], h: usize, w: usize) -> Vec<(f64, f64)> {
    let scale = 1.0 / ((h * w) as f64).sqrt();
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for u in 0..h {
                for v in 0..w {
                    let phase = 2.0 * PI * ((u * y) as f64 / h as f64 + (v * x) as f64 / w as f64);
                    let (a, b) = coeffs[u * w + v];
                    re += a * phase.cos() - b * phase.sin();
                    im += a * phase.sin() + b * phase.cos();
                }
            }
            out.push((re * scale, im * scale));
        }
    }
    out
}

fn signed(u: usize, n: usize) -> f64 {
    if u <= n / 2 {
        u as f64
    } else {
        u as f64 - n as f64
    }
}

/// Channel-averaged per-bin mean power from the brute-force DFT. Radii are
/// rounded; anything beyond `min(h,w)/2` is counted in the last bin.
pub fn brute_radial_mean(image: &ImageTensor) -> Vec<f64> {
    let (h, w, c) = (image.height(), image.width(), image.channels());
    let max_r = h.min(w) / 2;
    let mut sums = vec![0.0; max_r + 1];
    let mut counts = vec![0usize; max_r + 1];
    let spectra: Vec<_> = (0..c).map(|k| brute_dft(image.plane(k), h, w)).collect();
    for u in 0..h {
        for v in 0..w {
            let r = ((signed(u, h).powi(2) + signed(v, w).powi(2)).sqrt().round() as usize).min(max_r);
            let p: f64 = spectra.iter().map(|s| s[u * w + v].0.powi(2) + s[u * w + v].1.powi(2)).sum();
            sums[r] += p / c as f64;
            counts[r] += 1;
        }
    }
    sums.iter().zip(&counts).map(|(s, &n)| if n > 0 { s / n as f64 } else { 0.0 }).collect()
}

/// `log(1 + |X|)` from the brute-force DFT, DC moved to `(h/2, w/2)`.
pub fn brute_centered_log_magnitude(image: &ImageTensor) -> Vec<f64> {
    let (h, w, c) = (image.height(), image.width(), image.channels());
    let mut out = vec![0.0; h * w];
    for k in 0..c {
        let s = brute_dft(image.plane(k), h, w);
        for u in 0..h {
            for v in 0..w {
                let (re, im) = s[u * w + v];
                out[((u + h / 2) % h) * w + (v + w / 2) % w] += (re * re + im * im).sqrt().ln_1p() / c as f64;
            }
        }
    }
    out
}

pub fn central_difference(mut f: impl FnMut(f64) -> f64, x: f64, step: f64) -> f64 {
    (f(x + step) - f(x - step)) / (2.0 * step)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Average precision by counting, for each positive, how many samples
/// outrank it (higher score, or equal score and smaller index).
pub fn brute_average_precision(scores: &[f64], labels: &[u8]) -> f64 {
    let n = scores.len();
    let rank = |i: usize| 1 + (0..n).filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i)).count();
    let positives: Vec<usize> = (0..n).filter(|&i| labels[i] == 1).collect();
    let mut total = 0.0;
    for &i in &positives {
        let k = rank(i);
        let hits = positives.iter().filter(|&&j| rank(j) <= k).count();
        total += hits as f64 / k as f64;
    }
    total / positives.len() as f64
}

/// Picks `want` coordinates spread over `grads` whose magnitude exceeds
/// `floor`, so a relative comparison is meaningful.
pub fn probe_coordinates(grads: &[f64], want: usize, floor: f64) -> Vec<usize> {
    let n = grads.len();
    let stride = (n / (4 * want)).max(1);
    let mut picked: Vec<usize> = (0..n).step_by(stride).filter(|&i| grads[i].abs() > floor).collect();
    if picked.len() > want {
        let step = picked.len() as f64 / want as f64;
        picked = (0..want).map(|k| picked[(k as f64 * step) as usize]).collect();
    }
    picked
}

pub struct GradCheck {
    pub probed: usize,
    pub max_rel: f64,
}

/// Compares `analytic` with central differences of `loss` at up to `want`
/// coordinates of `params` (step `1e-6`).
pub fn check_gradient(params: &[f64], analytic: &[f64], want: usize, loss: impl Fn(&[f64]) -> f64) -> GradCheck {
    assert_eq!(params.len(), analytic.len());
    let coords = probe_coordinates(analytic, want, 1e-6);
    let mut max_rel: f64 = 0.0;
    let mut work = params.to_vec();
    for &i in &coords {
        let numeric = central_difference(
            |v| {
                work[i] = v;
                let l = loss(&work);
                work[i] = params[i];
                l
            },
            params[i],
            1e-6,
        );
        max_rel = max_rel.max(rel_err(analytic[i], numeric));
    }
    GradCheck { probed: coords.len(), max_rel }
}

pub mod fixtures {
    use frepgan::classifier::Classifier;
    use frepgan::data::LabeledImage;
    use frepgan::frepgan::{Discriminator, Generator};
    use frepgan::nn::presets::{ClassifierPreset, DiscriminatorPreset, GeneratorPreset};
    use frepgan::Shape;

    pub fn tiny_models(shape: Shape, seed: u64) -> (Generator, Discriminator, Classifier) {
        (
            Generator::new(GeneratorPreset::Tiny, shape, seed).unwrap(),
            Discriminator::new(DiscriminatorPreset::Tiny, shape, seed + 1).unwrap(),
            Classifier::new(ClassifierPreset::Tiny, shape, seed + 2).unwrap(),
        )
    }

    /// Alternating real/fake random images.
    pub fn labeled_batch(shape: Shape, n: usize, seed: u64) -> Vec<LabeledImage> {
        (0..n)
            .map(|i| {
                let img = super::random_image(shape.height, shape.width, shape.channels, seed * 1000 + i as u64);
                LabeledImage::new(img, (i % 2) as u8, "test").unwrap()
            })
            .collect()
    }
}
