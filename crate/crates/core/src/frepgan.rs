//! Perturbation generator, perturbation discriminator and their losses.
//!
//! The generator maps an image to an additive perturbation through the
//! frequency domain: forward transform, a learned map `H` over the `2c`
//! real/imaginary planes, inverse transform (real part). The discriminator
//! scores how likely an image is an unperturbed real image.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::presets::{DiscriminatorPreset, GeneratorPreset};
use crate::nn::{Architecture, Network, Trace};
use crate::reduce::canonical_mean;
use crate::spectral::{forward_planes, inverse_planes};
use crate::tensor::{ensure_same_shape, ImageTensor, PerturbationMap, Shape, Tensor3};

/// Probabilities are clamped to `[ε, 1 − ε]` before every logarithm.
pub const PROB_EPSILON: f64 = 1e-7;

/// Floor for the per-plane scale used by frequency standardisation.
const STANDARDIZE_FLOOR: f64 = 1e-8;

/// Logistic function, kept strictly inside `(0, 1)` even where `f64`
/// would round to an endpoint.
pub fn sigmoid(logit: f64) -> f64 {
    let p = if logit >= 0.0 {
        1.0 / (1.0 + (-logit).exp())
    } else {
        let e = logit.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPSILON, 1.0 - PROB_EPSILON)
}

/// True when the clamp leaves `p` untouched (its derivative is then 1).
pub(crate) fn clamp_is_passthrough(p: f64) -> bool {
    (PROB_EPSILON..=1.0 - PROB_EPSILON).contains(&p)
}

/// Which adversarial objective the generator minimises.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdversarialForm {
    /// `log(1 − D(x + G(x)))`.
    #[default]
    Saturating,
    /// `−log D(x + G(x))`; same fixed point, stronger early gradients.
    Nonsaturating,
}

impl AdversarialForm {
    /// Per-sample adversarial term for a discriminator output `p`.
    pub fn term(self, p: f64) -> f64 {
        let p = clamp_prob(p);
        match self {
            AdversarialForm::Saturating => (1.0 - p).ln(),
            AdversarialForm::Nonsaturating => -p.ln(),
        }
    }

    /// Derivative of [`AdversarialForm::term`] with respect to the logit.
    pub(crate) fn term_logit_grad(self, p: f64) -> f64 {
        if !clamp_is_passthrough(p) {
            return 0.0;
        }
        match self {
            AdversarialForm::Saturating => -p,
            AdversarialForm::Nonsaturating => -(1.0 - p),
        }
    }
}

/// Per-step loss values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_adv: f64,
    pub l_com: f64,
    pub l_g: f64,
    pub l_d: f64,
    pub l_c: f64,
}

impl LossBreakdown {
    pub fn all_finite(&self) -> bool {
        [self.l_adv, self.l_com, self.l_g, self.l_d, self.l_c]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// The perturbation generator `G = F⁻¹ ∘ H ∘ F`.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    net: Network,
    shape: Shape,
    standardize: bool,
}

/// Forward-pass record of [`Generator::generate_traced`].
#[derive(Clone, Debug)]
pub struct GeneratorTrace {
    net: Vec<Trace>,
    scales: Option<Vec<f64>>,
}

impl Generator {
    /// Wraps a network that must map `2c × h × w` onto itself.
    pub fn from_network(net: Network, shape: Shape, standardize: bool) -> Result<Self> {
        let want = (2 * shape.channels, shape.height, shape.width);
        if net.input_dims() != want || net.output_dims() != want {
            return Err(Error::Shape(format!(
                "frequency generator must map {want:?} onto itself, got {:?} -> {:?}",
                net.input_dims(),
                net.output_dims()
            )));
        }
        Ok(Generator {
            net,
            shape,
            standardize,
        })
    }

    pub fn new(preset: GeneratorPreset, shape: Shape, seed: u64) -> Result<Self> {
        if preset == GeneratorPreset::Identity {
            return Self::identity(shape);
        }
        let arch = preset.build(shape.channels, shape.height, shape.width);
        Self::from_network(Network::new(arch, seed)?, shape, false)
    }

    /// `H` = identity, so `G(x) = x` up to transform round-off.
    pub fn identity(shape: Shape) -> Result<Self> {
        let arch = GeneratorPreset::Identity.build(shape.channels, shape.height, shape.width);
        let mut net = Network::zeroed(arch)?;
        let c2 = 2 * shape.channels;
        for i in 0..c2 {
            net.params_mut()[i * c2 + i] = 1.0;
        }
        Self::from_network(net, shape, false)
    }

    /// `H` = zero map, so `G(x) = 0`.
    pub fn zero(preset: GeneratorPreset, shape: Shape) -> Result<Self> {
        let arch = preset.build(shape.channels, shape.height, shape.width);
        Self::from_network(Network::zeroed(arch)?, shape, false)
    }

    pub fn with_standardization(mut self, on: bool) -> Self {
        self.standardize = on;
        self
    }

    pub fn standardizes(&self) -> bool {
        self.standardize
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn arch(&self) -> &Architecture {
        self.net.arch()
    }

    pub fn image_shape(&self) -> Shape {
        self.shape
    }

    pub fn generate(&self, image: &ImageTensor) -> Result<PerturbationMap> {
        Ok(self.generate_traced(image)?.0)
    }

    pub fn generate_traced(&self, image: &ImageTensor) -> Result<(PerturbationMap, GeneratorTrace)> {
        ensure_same_shape(image.shape(), self.shape, "generator input")?;
        let mut freq = forward_planes(&Tensor3::from(image));
        let scales = self.standardize.then(|| {
            let n = freq.plane_len();
            let scales: Vec<f64> = freq
                .data
                .chunks(n)
                .map(|p| {
                    let mean = p.iter().sum::<f64>() / n as f64;
                    let var = p.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
                    var.sqrt().max(STANDARDIZE_FLOOR)
                })
                .collect();
            for (plane, s) in freq.data.chunks_mut(n).zip(&scales) {
                plane.iter_mut().for_each(|v| *v /= s);
            }
            scales
        });
        let (mut z, trace) = self.net.forward_traced(freq)?;
        if let Some(scales) = &scales {
            let n = z.plane_len();
            for (plane, s) in z.data.chunks_mut(n).zip(scales) {
                plane.iter_mut().for_each(|v| *v *= s);
            }
        }
        let (map, _) = inverse_planes(&z);
        if map.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("generator produced a non-finite perturbation".into()));
        }
        let out = ImageTensor::from_parts_unchecked(self.shape, map.data);
        Ok((
            PerturbationMap::new(out),
            GeneratorTrace {
                net: trace,
                scales,
            },
        ))
    }

    /// Accumulates into `grads` the parameter gradient of a loss whose
    /// gradient with respect to the perturbation map is `grad_map`.
    pub fn backward(&self, trace: &GeneratorTrace, grad_map: &[f64], grads: &mut [f64]) {
        let s = self.shape;
        let g = Tensor3::from_data(s.channels, s.height, s.width, grad_map.to_vec());
        // The adjoint of Re∘F⁻¹ on the orthonormal transform is F.
        let mut gz = forward_planes(&g);
        if let Some(scales) = &trace.scales {
            let n = gz.plane_len();
            for (plane, s) in gz.data.chunks_mut(n).zip(scales) {
                plane.iter_mut().for_each(|v| *v *= s);
            }
        }
        self.net.backward(&trace.net, gz, grads, false);
    }
}

/// `G(x)`.
pub fn generate_perturbation(g: &Generator, image: &ImageTensor) -> Result<PerturbationMap> {
    g.generate(image)
}

/// `x + G(x)`, deliberately not clamped.
pub fn apply_perturbation(image: &ImageTensor, map: &PerturbationMap) -> Result<ImageTensor> {
    ensure_same_shape(image.shape(), map.shape(), "perturbation")?;
    let data = image
        .data()
        .iter()
        .zip(map.as_image().data())
        .map(|(a, b)| a + b)
        .collect();
    ImageTensor::new(image.height(), image.width(), image.channels(), data)
}

/// The perturbation discriminator: probability that an image is a genuine,
/// unperturbed real image.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    net: Network,
    shape: Shape,
}

impl Discriminator {
    pub fn from_network(net: Network, shape: Shape) -> Result<Self> {
        binary_head(&net, shape, "discriminator")?;
        Ok(Discriminator { net, shape })
    }

    pub fn new(preset: DiscriminatorPreset, shape: Shape, seed: u64) -> Result<Self> {
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
        ensure_same_shape(image.shape(), self.shape, "discriminator input")?;
        Ok(self.net.forward(&Tensor3::from(image))?.data[0])
    }

    pub fn probability(&self, image: &ImageTensor) -> Result<f64> {
        Ok(sigmoid(self.logit(image)?))
    }
}

/// Checks that `net` reads images of `shape` and emits a single logit.
pub(crate) fn binary_head(net: &Network, shape: Shape, what: &str) -> Result<()> {
    let want = (shape.channels, shape.height, shape.width);
    if net.input_dims() != want {
        return Err(Error::Shape(format!(
            "{what} reads {:?}, images are {want:?}",
            net.input_dims()
        )));
    }
    if net.output_dims() != (1, 1, 1) {
        return Err(Error::Shape(format!(
            "{what} must emit one logit, emits {:?}",
            net.output_dims()
        )));
    }
    Ok(())
}

/// `D(image)`.
pub fn discriminate(d: &Discriminator, image: &ImageTensor) -> Result<f64> {
    d.probability(image)
}

fn nonempty<T>(batch: &[T], what: &str) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyInput(format!("{what} batch is empty")));
    }
    Ok(())
}

/// Mean adversarial term over discriminator outputs on perturbed images.
pub fn adversarial_loss_from_probs(probs: &[f64], form: AdversarialForm) -> Result<f64> {
    nonempty(probs, "adversarial")?;
    let terms: Vec<f64> = probs.iter().map(|&p| form.term(p)).collect();
    Ok(canonical_mean(&terms))
}

/// `mean log D(x_r) + mean log(1 − D(x + G(x)))` from discriminator outputs.
pub fn discriminator_loss_from_probs(real: &[f64], perturbed: &[f64]) -> Result<f64> {
    nonempty(real, "real")?;
    nonempty(perturbed, "mixed")?;
    let real_terms: Vec<f64> = real.iter().map(|&p| clamp_prob(p).ln()).collect();
    let fake_terms: Vec<f64> = perturbed
        .iter()
        .map(|&p| AdversarialForm::Saturating.term(p))
        .collect();
    Ok(canonical_mean(&real_terms) + canonical_mean(&fake_terms))
}

/// `D(x + G(x))` for every image of a batch.
pub fn perturbed_probabilities(d: &Discriminator, g: &Generator, batch: &[ImageTensor]) -> Result<Vec<f64>> {
    crate::parallel::try_map(batch, |x| {
        let map = g.generate(x)?;
        d.probability(&apply_perturbation(x, &map)?)
    })
}

/// Generator adversarial loss over a batch; the discriminator sees the
/// perturbed image `x + G(x)`.
pub fn adversarial_loss(d: &Discriminator, g: &Generator, batch: &[ImageTensor], form: AdversarialForm) -> Result<f64> {
    nonempty(batch, "adversarial")?;
    adversarial_loss_from_probs(&perturbed_probabilities(d, g, batch)?, form)
}

/// Mean over the batch of the per-element mean of `G(x)²`.
pub fn compression_loss(g: &Generator, batch: &[ImageTensor]) -> Result<f64> {
    nonempty(batch, "compression")?;
    let terms = crate::parallel::try_map(batch, |x| Ok::<_, Error>(g.generate(x)?.mean_square()))?;
    Ok(canonical_mean(&terms))
}

/// `λ·l_adv + (1 − λ)·l_com`.
pub fn generator_loss(l_adv: f64, l_com: f64, lambda: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("lambda {lambda} outside [0, 1]")));
    }
    Ok(lambda * l_adv + (1.0 - lambda) * l_com)
}

/// The discriminator objective (to be maximised).
pub fn discriminator_loss(
    d: &Discriminator,
    g: &Generator,
    real_batch: &[ImageTensor],
    mixed_batch: &[ImageTensor],
) -> Result<f64> {
    nonempty(real_batch, "real")?;
    nonempty(mixed_batch, "mixed")?;
    let real = crate::parallel::try_map(real_batch, |x| d.probability(x))?;
    let perturbed = perturbed_probabilities(d, g, mixed_batch)?;
    discriminator_loss_from_probs(&real, &perturbed)
}

#[cfg(test)]
#[allow(clippy::approx_constant)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn shape() -> Shape {
        Shape::new(8, 8, 1)
    }

    #[test]
    fn scalar_losses() {
        let f = AdversarialForm::Saturating;
        assert_abs_diff_eq!(adversarial_loss_from_probs(&[0.5], f).unwrap(), -0.693147, epsilon = 5e-7);
        assert_abs_diff_eq!(adversarial_loss_from_probs(&[1.0], f).unwrap(), -16.118096, epsilon = 5e-7);
        assert_abs_diff_eq!(
            adversarial_loss_from_probs(&[0.25, 0.75], f).unwrap(),
            -0.836988,
            epsilon = 5e-7
        );
        assert_abs_diff_eq!(generator_loss(-0.693147, 1.0, 0.5).unwrap(), 0.1534265, epsilon = 1e-9);
        assert!(matches!(generator_loss(0.0, 0.0, 1.5), Err(Error::Config(_))));
        assert_abs_diff_eq!(discriminator_loss_from_probs(&[1.0], &[0.0]).unwrap(), 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(
            discriminator_loss_from_probs(&[0.5], &[0.5]).unwrap(),
            -1.386294,
            epsilon = 5e-7
        );
        assert!(matches!(adversarial_loss_from_probs(&[], f), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn zero_generator_gives_zero_map() {
        let g = Generator::zero(GeneratorPreset::Toy, shape()).unwrap();
        let x = ImageTensor::from_fn(8, 8, 1, |y, x, _| ((y * 8 + x) as f64 / 32.0) - 1.0).unwrap();
        let m = generate_perturbation(&g, &x).unwrap();
        assert!(m.as_image().data().iter().all(|&v| v == 0.0));
        assert_eq!(compression_loss(&g, &[x]).unwrap(), 0.0);
    }

    #[test]
    fn identity_generator_reproduces_input() {
        let g = Generator::identity(Shape::new(8, 4, 3)).unwrap();
        let x = ImageTensor::from_fn(8, 4, 3, |y, x, c| ((y * 5 + x * 3 + c) % 7) as f64 / 7.0).unwrap();
        let m = g.generate(&x).unwrap();
        assert!(m.as_image().max_abs_diff(&x) < 1e-5);
    }

    #[test]
    fn zero_discriminator_is_a_coin() {
        let arch = DiscriminatorPreset::Toy.build(1, 8, 8);
        let d = Discriminator::from_network(Network::zeroed(arch).unwrap(), shape()).unwrap();
        let x = ImageTensor::filled(8, 8, 1, 0.3).unwrap();
        assert_eq!(discriminate(&d, &x).unwrap(), 0.5);
    }

    #[test]
    fn shape_mismatches_are_errors() {
        let g = Generator::new(GeneratorPreset::Tiny, shape(), 1).unwrap();
        let x = ImageTensor::zeros(4, 4, 1).unwrap();
        assert!(matches!(g.generate(&x), Err(Error::Shape(_))));
        let m = g.generate(&ImageTensor::zeros(8, 8, 1).unwrap()).unwrap();
        assert!(matches!(apply_perturbation(&x, &m), Err(Error::Shape(_))));
        // Toy encoder-decoder cannot reproduce a size that is not a multiple of 4.
        assert!(Generator::new(GeneratorPreset::Toy, Shape::new(10, 10, 1), 1).is_err());
    }

    #[test]
    fn apply_is_unclamped_sum() {
        let x = ImageTensor::filled(4, 4, 1, 0.75).unwrap();
        let map = PerturbationMap::new(x.clone());
        let y = apply_perturbation(&x, &map).unwrap();
        assert!(y.data().iter().all(|&v| v == 1.5));
    }
}
