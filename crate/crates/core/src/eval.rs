//! Detection metrics and declarative evaluation scenarios.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::classifier::{check_label, predict, Classifier, FAKE, REAL, THRESHOLD};
use crate::data::{
    load_dataset, manipulate, resize, resize_to, synthesize_toy_dataset_with_channels, LabeledImage,
    ManipulationSpec, SyntheticArtifactSpec,
};
use crate::error::{Error, Result};
use crate::frepgan::Generator;
use crate::parallel;
use crate::tensor::ImageTensor;

/// Scores paired with ground-truth labels (1 = fake = positive).
#[derive(Clone, Debug, PartialEq)]
pub struct RankedScores {
    scores: Vec<f64>,
    labels: Vec<u8>,
}

impl RankedScores {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if scores.is_empty() {
            return Err(Error::EmptyInput("no scores".into()));
        }
        for &l in &labels {
            check_label(l)?;
        }
        if let Some(s) = scores.iter().find(|s| s.is_nan()) {
            return Err(Error::InvalidInput(format!("score {s} is not a number")));
        }
        Ok(Self { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Indices sorted by score descending, ties by index ascending.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        idx
    }
}

/// Fraction of samples whose thresholded score (`>= threshold` means fake)
/// equals the label.
pub fn accuracy(rs: &RankedScores, threshold: f64) -> f64 {
    let hits = rs
        .scores
        .iter()
        .zip(&rs.labels)
        .filter(|&(&s, &l)| u8::from(s >= threshold) == l)
        .count();
    hits as f64 / rs.len() as f64
}

/// Non-interpolated average precision over the positives.
pub fn average_precision(rs: &RankedScores) -> Result<f64> {
    let positives = rs.labels.iter().filter(|&&l| l == FAKE).count();
    if positives == 0 {
        return Err(Error::UndefinedMetric("average precision needs at least one positive".into()));
    }
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, &i) in rs.ranking().iter().enumerate() {
        if rs.labels[i] == FAKE {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(total / positives as f64)
}

/// PSNR in dB for images in `[-1, 1]` (peak-to-peak range 2).
pub fn psnr(reference: &ImageTensor, other: &ImageTensor) -> Result<f64> {
    if reference.shape() != other.shape() {
        return Err(Error::Shape(format!("{} vs {}", reference.shape(), other.shape())));
    }
    let mse = reference
        .data()
        .iter()
        .zip(other.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / reference.data().len() as f64;
    Ok(10.0 * (4.0 / mse).log10())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenario_id: String,
    pub accuracy: f64,
    pub average_precision: f64,
    pub n_real: usize,
    pub n_fake: usize,
}

/// Fake-probabilities of `x + G(x)` for every sample, in order.
pub fn score_samples(g: &Generator, c: &Classifier, samples: &[LabeledImage]) -> Result<RankedScores> {
    let scores = parallel::try_map(samples, |s| predict(g, c, &s.image).map(|p| p.prob_fake))?;
    RankedScores::new(scores, samples.iter().map(|s| s.label).collect())
}

pub fn evaluate_samples(
    scenario_id: &str,
    g: &Generator,
    c: &Classifier,
    samples: &[LabeledImage],
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::InvalidDataset(format!("scenario {scenario_id} has no samples")));
    }
    let rs = score_samples(g, c, samples)?;
    let n_real = samples.iter().filter(|s| s.label == REAL).count();
    Ok(EvalReport {
        scenario_id: scenario_id.to_string(),
        accuracy: accuracy(&rs, THRESHOLD),
        average_precision: average_precision(&rs)?,
        n_real,
        n_fake: samples.len() - n_real,
    })
}

/// Which part of a stratified train/held-out split to keep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitPart {
    Train,
    Holdout,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSelection {
    pub fraction: f64,
    pub seed: u64,
    pub part: SplitPart,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetRef {
    /// `root/{real,fake}` image folders.
    Directory { path: PathBuf },
    Synthetic {
        #[serde(default)]
        spec_real: SyntheticArtifactSpec,
        spec_fake: SyntheticArtifactSpec,
        n_per_class: usize,
        size: usize,
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Transform {
    Manipulate(ManipulationSpec),
    /// Resample to a `size × size` square.
    Resize { size: usize },
}

impl Transform {
    pub fn apply(&self, image: &ImageTensor) -> Result<ImageTensor> {
        match self {
            Transform::Manipulate(spec) => manipulate(image, spec),
            Transform::Resize { size } => resize(image, *size),
        }
    }
}

/// A re-runnable evaluation: dataset, optional split, transform chain and
/// fake-family filter. Reals are always kept by the filter; fakes are kept
/// when their source tag is listed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub dataset: DatasetRef,
    #[serde(default)]
    pub split: Option<SplitSelection>,
    #[serde(default)]
    pub transforms: Vec<Transform>,
    #[serde(default)]
    pub family_filter: Option<Vec<String>>,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("scenario: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("scenario: {e}")))
    }

    /// Materialises the scenario's samples at the model's input shape.
    /// Transformed images whose size differs from the model input are
    /// resampled back to it.
    pub fn samples(&self, height: usize, width: usize, channels: usize) -> Result<Vec<LabeledImage>> {
        let mut samples = match &self.dataset {
            DatasetRef::Directory { path } => load_dataset(path, Some(height), channels)?,
            DatasetRef::Synthetic { spec_real, spec_fake, n_per_class, size, seed } => {
                synthesize_toy_dataset_with_channels(spec_real, spec_fake, *n_per_class, *size, channels, *seed)?
            }
        };
        if let Some(split) = &self.split {
            let (train, holdout) = split_holdout(samples, split.fraction, split.seed)?;
            samples = match split.part {
                SplitPart::Train => train,
                SplitPart::Holdout => holdout,
            };
        }
        if let Some(families) = &self.family_filter {
            samples.retain(|s| s.label == REAL || families.iter().any(|f| f == &s.source_tag));
        }
        parallel::try_map(&samples, |s| {
            let mut image = s.image.clone();
            for t in &self.transforms {
                image = t.apply(&image)?;
            }
            if image.height() != height || image.width() != width {
                image = resize_to(&image, height, width)?;
            }
            Ok(LabeledImage { image, label: s.label, source_tag: s.source_tag.clone() })
        })
    }
}

pub fn run_scenario(g: &Generator, c: &Classifier, scenario: &Scenario) -> Result<EvalReport> {
    let shape = c.image_shape();
    let samples = scenario.samples(shape.height, shape.width, shape.channels)?;
    evaluate_samples(&scenario.id, g, c, &samples)
}

/// Stratified split: within each class a seeded permutation sends the last
/// `round(fraction · n_class)` samples (at least one when `fraction > 0`)
/// to the held-out part. Relative order is preserved in both parts.
pub fn split_holdout(
    samples: Vec<LabeledImage>,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<LabeledImage>, Vec<LabeledImage>)> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Config(format!("holdout fraction {fraction} outside [0, 1)")));
    }
    let mut is_holdout = vec![false; samples.len()];
    for label in [REAL, FAKE] {
        let mut idx: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].label == label).collect();
        if idx.is_empty() || fraction == 0.0 {
            continue;
        }
        let take = ((fraction * idx.len() as f64).round() as usize).max(1);
        if take >= idx.len() {
            return Err(Error::InvalidDataset(format!(
                "class {label} has {} samples, too few to hold out {take}",
                idx.len()
            )));
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ (0xA5A5_0000 + u64::from(label)));
        idx.shuffle(&mut rng);
        for &i in &idx[idx.len() - take..] {
            is_holdout[i] = true;
        }
    }
    let mut train = Vec::new();
    let mut holdout = Vec::new();
    for (s, h) in samples.into_iter().zip(is_holdout) {
        if h {
            holdout.push(s);
        } else {
            train.push(s);
        }
    }
    Ok((train, holdout))
}
