//! The binary deepfake classifier and the end-to-end prediction path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frepgan::{apply_perturbation, binary_head, clamp_prob, sigmoid, Generator};
use crate::nn::presets::ClassifierPreset;
use crate::nn::Network;
use crate::reduce::canonical_mean;
use crate::tensor::{ensure_same_shape, ImageTensor, Shape, Tensor3};

pub const REAL: u8 = 0;
pub const FAKE: u8 = 1;

/// Decision threshold on `prob_fake`; `≥` counts as fake.
pub const THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub prob_fake: f64,
    pub label: u8,
}

impl Prediction {
    pub fn from_prob(prob_fake: f64) -> Self {
        Prediction {
            prob_fake,
            label: u8::from(prob_fake >= THRESHOLD),
        }
    }
}

pub(crate) fn check_label(label: u8) -> Result<u8> {
    if label > 1 {
        return Err(Error::InvalidLabel(label));
    }
    Ok(label)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    net: Network,
    shape: Shape,
}

impl Classifier {
    pub fn from_network(net: Network, shape: Shape) -> Result<Self> {
        binary_head(&net, shape, "classifier")?;
        Ok(Classifier { net, shape })
    }

    pub fn new(preset: ClassifierPreset, shape: Shape, seed: u64) -> Result<Self> {
        let arch = preset.build(shape.channels, shape.height, shape.width);
        Self::from_network(Network::new(arch, seed)?, shape)
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn image_shape(&self) -> Shape {
        self.shape
    }

    pub fn logit(&self, image: &ImageTensor) -> Result<f64> {
        ensure_same_shape(image.shape(), self.shape, "classifier input")?;
        Ok(self.net.forward(&Tensor3::from(image))?.data[0])
    }
}

/// Scores an (already perturbed) image.
pub fn classify(c: &Classifier, perturbed: &ImageTensor) -> Result<Prediction> {
    Ok(Prediction::from_prob(sigmoid(c.logit(perturbed)?)))
}

/// Binary cross-entropy of one clamped probability against a label.
pub fn binary_cross_entropy(prob_fake: f64, label: u8) -> f64 {
    let p = clamp_prob(prob_fake);
    if label == FAKE {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Mean binary cross-entropy over `(prob_fake, label)` pairs.
pub fn bce_from_probs(batch: &[(f64, u8)]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("classifier batch is empty".into()));
    }
    let terms = batch
        .iter()
        .map(|&(p, y)| Ok(binary_cross_entropy(p, check_label(y)?)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(canonical_mean(&terms))
}

/// Mean cross-entropy of `C(x + G(x))` against the labels. `G` only
/// shapes the input here; it is not a trainable argument of this loss.
pub fn classifier_loss(c: &Classifier, g: &Generator, batch: &[(ImageTensor, u8)]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("classifier batch is empty".into()));
    }
    for (_, y) in batch {
        check_label(*y)?;
    }
    let probs = crate::parallel::try_map(batch, |(x, y)| Ok::<_, Error>((predict(g, c, x)?.prob_fake, *y)))?;
    bce_from_probs(&probs)
}

/// `C(x + G(x))`.
pub fn predict(g: &Generator, c: &Classifier, image: &ImageTensor) -> Result<Prediction> {
    let map = g.generate(image)?;
    classify(c, &apply_perturbation(image, &map)?)
}
