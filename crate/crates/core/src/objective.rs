//! One fused forward/backward pass over a labelled batch.
//!
//! Every loss of a training step is evaluated against the same parameter
//! snapshot, sharing the generator and discriminator forward passes. The
//! returned gradients are descent directions:
//!
//! * generator: `∇ L_G`, with `L_G = λ·L_adv + (1 − λ)·L_com`
//! * discriminator: `−∇ L_D` (the discriminator maximises `L_D`)
//! * classifier: `∇ L_C`, with the generator output treated as a constant.

use crate::classifier::{binary_cross_entropy, check_label, Classifier, REAL};
use crate::data::LabeledImage;
use crate::error::{Error, Result};
use crate::frepgan::{clamp_is_passthrough, clamp_prob, sigmoid, AdversarialForm, Discriminator, Generator, LossBreakdown};
use crate::parallel;
use crate::reduce::{canonical_mean, sum_vectors};
use crate::tensor::Tensor3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveSettings {
    pub lambda: f64,
    pub form: AdversarialForm,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchGradients {
    pub generator: Vec<f64>,
    pub discriminator: Vec<f64>,
    pub classifier: Vec<f64>,
}

struct SampleResult {
    adv: f64,
    com: f64,
    perturbed_term: f64,
    real_term: Option<f64>,
    bce: f64,
    grads: BatchGradients,
}

fn unit_logit() -> Tensor3 {
    Tensor3::from_data(1, 1, 1, vec![1.0])
}

fn axpy(dst: &mut [f64], alpha: f64, src: &[f64]) {
    if alpha != 0.0 {
        for (d, s) in dst.iter_mut().zip(src) {
            *d += alpha * s;
        }
    }
}

/// Losses of the batch and their gradients (see module docs).
pub fn evaluate_batch(
    g: &Generator,
    d: &Discriminator,
    c: &Classifier,
    batch: &[LabeledImage],
    settings: ObjectiveSettings,
) -> Result<(LossBreakdown, BatchGradients)> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("training batch is empty".into()));
    }
    if !(0.0..=1.0).contains(&settings.lambda) {
        return Err(Error::Config(format!("lambda {} outside [0, 1]", settings.lambda)));
    }
    for s in batch {
        check_label(s.label)?;
    }
    let n = batch.len() as f64;
    let n_real = batch.iter().filter(|s| s.label == REAL).count();
    let lambda = settings.lambda;

    let results = parallel::try_map(batch, |sample| -> Result<SampleResult> {
        let x = &sample.image;
        let mut grads = BatchGradients {
            generator: vec![0.0; g.network().param_count()],
            discriminator: vec![0.0; d.network().param_count()],
            classifier: vec![0.0; c.network().param_count()],
        };

        let (map, g_trace) = g.generate_traced(x)?;
        let numel = map.as_image().data().len() as f64;
        let perturbed: Vec<f64> = x
            .data()
            .iter()
            .zip(map.as_image().data())
            .map(|(a, b)| a + b)
            .collect();
        let shape = x.shape();
        let perturbed = Tensor3::from_data(shape.channels, shape.height, shape.width, perturbed);

        // Discriminator on x + G(x): one unit backward serves both the
        // generator (input gradient) and the discriminator (parameters).
        let (logit, d_trace) = d.network().forward_traced(perturbed.clone())?;
        let p = sigmoid(logit.data[0]);
        let adv = settings.form.term(p);
        let perturbed_term = AdversarialForm::Saturating.term(p);
        let adv_coef = lambda * settings.form.term_logit_grad(p) / n;
        let disc_coef = -AdversarialForm::Saturating.term_logit_grad(p) / n;
        let mut unit_d = vec![0.0; d.network().param_count()];
        let unit_input = d
            .network()
            .backward(&d_trace, unit_logit(), &mut unit_d, true)
            .expect("input gradient requested");
        axpy(&mut grads.discriminator, disc_coef, &unit_d);

        let mut grad_map: Vec<f64> = unit_input.data.iter().map(|v| adv_coef * v).collect();
        let com_coef = (1.0 - lambda) * 2.0 / (n * numel);
        for (gm, m) in grad_map.iter_mut().zip(map.as_image().data()) {
            *gm += com_coef * m;
        }
        g.backward(&g_trace, &grad_map, &mut grads.generator);

        let real_term = if sample.label == REAL {
            let (logit, trace) = d.network().forward_traced(Tensor3::from(x))?;
            let q = sigmoid(logit.data[0]);
            let dlogit = if clamp_is_passthrough(q) { 1.0 - q } else { 0.0 };
            let coef = -dlogit / n_real as f64;
            let mut tmp = vec![0.0; d.network().param_count()];
            d.network().backward(&trace, unit_logit(), &mut tmp, false);
            axpy(&mut grads.discriminator, coef, &tmp);
            Some(clamp_prob(q).ln())
        } else {
            None
        };

        let (logit, c_trace) = c.network().forward_traced(perturbed)?;
        let s = sigmoid(logit.data[0]);
        let bce = binary_cross_entropy(s, sample.label);
        let dlogit = if clamp_is_passthrough(s) {
            s - f64::from(sample.label)
        } else {
            0.0
        };
        let grad = Tensor3::from_data(1, 1, 1, vec![dlogit / n]);
        c.network().backward(&c_trace, grad, &mut grads.classifier, false);

        Ok(SampleResult {
            adv,
            com: map.mean_square(),
            perturbed_term,
            real_term,
            bce,
            grads,
        })
    })?;

    let collect = |f: &dyn Fn(&SampleResult) -> f64| -> Vec<f64> { results.iter().map(f).collect() };
    let l_adv = canonical_mean(&collect(&|r| r.adv));
    let l_com = canonical_mean(&collect(&|r| r.com));
    let real_terms: Vec<f64> = results.iter().filter_map(|r| r.real_term).collect();
    let l_d = canonical_mean(&real_terms) + canonical_mean(&collect(&|r| r.perturbed_term));
    let l_c = canonical_mean(&collect(&|r| r.bce));
    let losses = LossBreakdown {
        l_adv,
        l_com,
        l_g: lambda * l_adv + (1.0 - lambda) * l_com,
        l_d,
        l_c,
    };

    let gather = |pick: &dyn Fn(&BatchGradients) -> &Vec<f64>, len: usize| {
        let parts: Vec<Vec<f64>> = results.iter().map(|r| pick(&r.grads).clone()).collect();
        sum_vectors(&parts, len)
    };
    let grads = BatchGradients {
        generator: gather(&|g| &g.generator, g.network().param_count()),
        discriminator: gather(&|g| &g.discriminator, d.network().param_count()),
        classifier: gather(&|g| &g.classifier, c.network().param_count()),
    };
    Ok((losses, grads))
}
