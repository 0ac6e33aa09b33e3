//! Alternating G → D → C optimisation over mini-batches, with seeded
//! shuffling, held-out evaluation and checkpointing.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{decode_floats, encode_floats, Container};
use crate::classifier::Classifier;
use crate::data::{require_both_classes, LabeledImage};
use crate::error::{Error, Result};
use crate::eval::{evaluate_samples, split_holdout};
use crate::frepgan::{AdversarialForm, Discriminator, Generator, LossBreakdown};
use crate::nn::presets::{ClassifierPreset, DiscriminatorPreset, GeneratorPreset};
use crate::nn::{Adam, AdamConfig, Architecture, Network};
use crate::objective::{evaluate_batch, ObjectiveSettings};
use crate::reduce::canonical_mean;
use crate::tensor::Shape;

/// Training hyper-parameters. Field names double as config-file keys.
///
/// `lr_discriminator` defaults to `1e-1`, which is very large for an
/// adaptive-moment optimizer; small-scale runs should lower it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub lr_classifier: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub image_size: usize,
    pub channels: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub adversarial_form: AdversarialForm,
    pub generator: GeneratorPreset,
    pub discriminator: DiscriminatorPreset,
    pub classifier: ClassifierPreset,
    /// Normalise each frequency plane to unit RMS before `H` and undo it after.
    pub standardize_spectrum: bool,
    /// Fraction of each class held out for per-epoch evaluation.
    pub holdout_fraction: f64,
    /// Checkpoint whose classifier weights initialise `C` (random when unset).
    pub classifier_init: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            lr_generator: 1e-4,
            lr_discriminator: 1e-1,
            lr_classifier: 1e-4,
            batch_size: 16,
            epochs: 20,
            image_size: 256,
            channels: 3,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            adversarial_form: AdversarialForm::Saturating,
            generator: GeneratorPreset::default(),
            discriminator: DiscriminatorPreset::default(),
            classifier: ClassifierPreset::default(),
            standardize_spectrum: false,
            holdout_fraction: 0.2,
            classifier_init: None,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda {} outside [0, 1]", self.lambda));
        }
        for (name, lr) in [
            ("lr_generator", self.lr_generator),
            ("lr_discriminator", self.lr_discriminator),
            ("lr_classifier", self.lr_classifier),
        ] {
            if !lr.is_finite() || lr < 0.0 {
                return bad(format!("{name} {lr} must be finite and >= 0"));
            }
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.image_size < 8 {
            return bad(format!("image_size {} below 8", self.image_size));
        }
        if self.channels != 1 && self.channels != 3 {
            return bad(format!("channels {} must be 1 or 3", self.channels));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam betas must lie in [0, 1)".into());
        }
        if self.adam_epsilon.is_nan() || self.adam_epsilon <= 0.0 {
            return bad("adam_epsilon must be > 0".into());
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return bad(format!("holdout_fraction {} outside [0, 1)", self.holdout_fraction));
        }
        Ok(())
    }

    pub fn image_shape(&self) -> Shape {
        Shape { height: self.image_size, width: self.image_size, channels: self.channels }
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig { lr, beta1: self.beta1, beta2: self.beta2, epsilon: self.adam_epsilon }
    }

    fn objective(&self) -> ObjectiveSettings {
        ObjectiveSettings { lambda: self.lambda, form: self.adversarial_form }
    }
}

/// Everything needed to continue training bit-exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub config: TrainConfig,
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub classifier: Classifier,
    pub generator_opt: Adam,
    pub discriminator_opt: Adam,
    pub classifier_opt: Adam,
    /// Completed epochs.
    pub epoch: u64,
    /// Completed steps.
    pub step: u64,
    /// Loss breakdown of every completed step.
    pub history: Vec<LossBreakdown>,
}

fn derive_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

impl TrainState {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let shape = config.image_shape();
        let generator = Generator::new(config.generator, shape, derive_seed(config.seed, 1))?
            .with_standardization(config.standardize_spectrum);
        let discriminator = Discriminator::new(config.discriminator, shape, derive_seed(config.seed, 2))?;
        let mut classifier = Classifier::new(config.classifier, shape, derive_seed(config.seed, 3))?;
        if let Some(path) = &config.classifier_init {
            let donor = load_checkpoint(path)?;
            if donor.classifier.network().arch() != classifier.network().arch() {
                return Err(Error::Config(format!(
                    "classifier in {} does not match the configured preset",
                    path.display()
                )));
            }
            classifier = donor.classifier;
        }
        Ok(Self {
            generator_opt: Adam::new(generator.network().param_count()),
            discriminator_opt: Adam::new(discriminator.network().param_count()),
            classifier_opt: Adam::new(classifier.network().param_count()),
            config,
            generator,
            discriminator,
            classifier,
            epoch: 0,
            step: 0,
            history: Vec::new(),
        })
    }

    fn all_params_finite(&self) -> bool {
        self.generator.network().all_finite()
            && self.discriminator.network().all_finite()
            && self.classifier.network().all_finite()
    }
}

fn diverged(step: u64, what: impl Into<String>) -> Error {
    Error::Divergence { step, what: what.into() }
}

/// One step: all three gradients from the current parameters, then Adam
/// updates of G, D and C in that order. Returns the pre-update losses.
///
/// On a divergence error the state must be discarded.
pub fn train_step(state: &mut TrainState, batch: &[LabeledImage]) -> Result<LossBreakdown> {
    if !state.all_params_finite() {
        return Err(diverged(state.step, "non-finite parameter before update"));
    }
    let (losses, grads) = evaluate_batch(
        &state.generator,
        &state.discriminator,
        &state.classifier,
        batch,
        state.config.objective(),
    )?;
    let step = state.step;
    if !losses.all_finite() {
        return Err(diverged(step, format!("non-finite loss {losses:?}")));
    }
    for (name, g) in [
        ("generator", &grads.generator),
        ("discriminator", &grads.discriminator),
        ("classifier", &grads.classifier),
    ] {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(diverged(step, format!("non-finite {name} gradient")));
        }
    }
    let cfg = &state.config;
    state
        .generator_opt
        .step(&cfg.adam(cfg.lr_generator), state.generator.network_mut().params_mut(), &grads.generator);
    state.discriminator_opt.step(
        &cfg.adam(cfg.lr_discriminator),
        state.discriminator.network_mut().params_mut(),
        &grads.discriminator,
    );
    state
        .classifier_opt
        .step(&cfg.adam(cfg.lr_classifier), state.classifier.network_mut().params_mut(), &grads.classifier);
    if !state.all_params_finite() {
        return Err(diverged(step, "non-finite parameter after update"));
    }
    state.step += 1;
    state.history.push(losses);
    Ok(losses)
}

/// Sample order of `epoch`, a pure function of `(seed, epoch)`.
pub fn epoch_order(seed: u64, epoch: u64, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x1000 + epoch));
    order.shuffle(&mut rng);
    order
}

pub fn steps_per_epoch(n: usize, batch_size: usize) -> u64 {
    n.div_ceil(batch_size) as u64
}

/// Per-epoch record of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: u64,
    pub step: u64,
    pub l_adv: f64,
    pub l_com: f64,
    pub l_g: f64,
    pub l_d: f64,
    pub l_c: f64,
    pub eval_acc: Option<f64>,
    pub eval_ap: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Writes `epoch_NNN.ckpt` and `latest.ckpt` here after every epoch.
    pub checkpoint_dir: Option<PathBuf>,
    /// Appends one JSON line per completed epoch.
    pub metrics_path: Option<PathBuf>,
    /// Stops once this many total steps have run.
    pub max_steps: Option<u64>,
}

fn epoch_record(state: &TrainState, epoch: u64, spe: u64, holdout: &[LabeledImage]) -> Result<MetricsRecord> {
    let steps = &state.history[(epoch * spe) as usize..((epoch + 1) * spe) as usize];
    let mean = |f: fn(&LossBreakdown) -> f64| canonical_mean(&steps.iter().map(f).collect::<Vec<_>>());
    let (eval_acc, eval_ap) = if holdout.is_empty() {
        (None, None)
    } else {
        let report = evaluate_samples("holdout", &state.generator, &state.classifier, holdout)?;
        (Some(report.accuracy), Some(report.average_precision))
    };
    Ok(MetricsRecord {
        epoch,
        step: state.step,
        l_adv: mean(|l| l.l_adv),
        l_com: mean(|l| l.l_com),
        l_g: mean(|l| l.l_g),
        l_d: mean(|l| l.l_d),
        l_c: mean(|l| l.l_c),
        eval_acc,
        eval_ap,
    })
}

fn append_line(path: &Path, line: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    writeln!(f, "{line}").map_err(|e| Error::io(path, e))
}

/// Continues training `state` on an already split dataset until
/// `config.epochs` epochs (or `options.max_steps`) are done. Returns the
/// records of the epochs completed by this call.
pub fn train_on_split(
    state: &mut TrainState,
    train: &[LabeledImage],
    holdout: &[LabeledImage],
    options: &TrainOptions,
) -> Result<Vec<MetricsRecord>> {
    require_both_classes(train)?;
    let bs = state.config.batch_size;
    let spe = steps_per_epoch(train.len(), bs);
    let total = state.config.epochs as u64 * spe;
    let limit = options.max_steps.map_or(total, |m| m.min(total));
    let mut log = Vec::new();
    let mut order: Option<(u64, Vec<usize>)> = None;
    while state.step < limit {
        let epoch = state.step / spe;
        let pos = (state.step % spe) as usize;
        if order.as_ref().is_none_or(|(e, _)| *e != epoch) {
            order = Some((epoch, epoch_order(state.config.seed, epoch, train.len())));
        }
        let idx = &order.as_ref().expect("set above").1;
        let batch: Vec<LabeledImage> = idx[pos * bs..((pos + 1) * bs).min(train.len())]
            .iter()
            .map(|&i| train[i].clone())
            .collect();
        train_step(state, &batch)?;
        if state.step.is_multiple_of(spe) {
            state.epoch = epoch + 1;
            let record = epoch_record(state, epoch, spe, holdout)?;
            log::info!(
                "epoch {} step {} l_g {:.5} l_d {:.5} l_c {:.5} eval_acc {:?}",
                record.epoch,
                record.step,
                record.l_g,
                record.l_d,
                record.l_c,
                record.eval_acc
            );
            if let Some(path) = &options.metrics_path {
                append_line(path, &serde_json::to_string(&record).expect("record serialises"))?;
            }
            if let Some(dir) = &options.checkpoint_dir {
                save_checkpoint(state, &dir.join(format!("epoch_{:03}.ckpt", state.epoch)))?;
                save_checkpoint(state, &dir.join("latest.ckpt"))?;
            }
            log.push(record);
        }
    }
    Ok(log)
}

/// Splits `dataset` into train / held-out parts as configured.
pub fn split_for(config: &TrainConfig, dataset: Vec<LabeledImage>) -> Result<(Vec<LabeledImage>, Vec<LabeledImage>)> {
    require_both_classes(&dataset)?;
    split_holdout(dataset, config.holdout_fraction, config.seed)
}

pub fn train(config: TrainConfig, dataset: Vec<LabeledImage>) -> Result<(TrainState, Vec<MetricsRecord>)> {
    train_with(config, dataset, &TrainOptions::default())
}

pub fn train_with(
    config: TrainConfig,
    dataset: Vec<LabeledImage>,
    options: &TrainOptions,
) -> Result<(TrainState, Vec<MetricsRecord>)> {
    config.validate()?;
    let (train_set, holdout) = split_for(&config, dataset)?;
    let mut state = TrainState::new(config)?;
    let log = train_on_split(&mut state, &train_set, &holdout, options)?;
    Ok((state, log))
}

const META: [u8; 4] = *b"META";

#[derive(Serialize, Deserialize)]
struct Meta {
    config: TrainConfig,
    epoch: u64,
    step: u64,
}

fn push_network(c: &mut Container, arch_tag: [u8; 4], param_tag: [u8; 4], net: &Network) {
    c.push(arch_tag, serde_json::to_vec(net.arch()).expect("architecture serialises"));
    c.push_floats(param_tag, net.params());
}

fn read_network(c: &Container, arch_tag: [u8; 4], param_tag: [u8; 4]) -> Result<Network> {
    let arch: Architecture = serde_json::from_slice(c.section(arch_tag)?)
        .map_err(|e| Error::Checkpoint(format!("architecture: {e}")))?;
    Network::from_params(arch, c.floats(param_tag)?).map_err(|e| Error::Checkpoint(e.to_string()))
}

fn encode_adam(opt: &Adam) -> Vec<u8> {
    let mut out = opt.steps.to_le_bytes().to_vec();
    out.extend(encode_floats(&opt.first_moment));
    out.extend(encode_floats(&opt.second_moment));
    out
}

fn decode_adam(bytes: &[u8], len: usize) -> Result<Adam> {
    if bytes.len() != 8 + 16 * len {
        return Err(Error::Checkpoint("optimizer section has wrong length".into()));
    }
    let steps = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"));
    let floats = decode_floats(&bytes[8..])?;
    let (m, v) = floats.split_at(len);
    Ok(Adam { first_moment: m.to_vec(), second_moment: v.to_vec(), steps })
}

pub fn state_to_container(state: &TrainState) -> Container {
    let mut c = Container::new();
    let meta = Meta { config: state.config.clone(), epoch: state.epoch, step: state.step };
    c.push(META, serde_json::to_vec(&meta).expect("meta serialises"));
    push_network(&mut c, *b"GARC", *b"GPAR", state.generator.network());
    push_network(&mut c, *b"DARC", *b"DPAR", state.discriminator.network());
    push_network(&mut c, *b"CARC", *b"CPAR", state.classifier.network());
    c.push(*b"GOPT", encode_adam(&state.generator_opt));
    c.push(*b"DOPT", encode_adam(&state.discriminator_opt));
    c.push(*b"COPT", encode_adam(&state.classifier_opt));
    let hist: Vec<f64> = state
        .history
        .iter()
        .flat_map(|l| [l.l_adv, l.l_com, l.l_g, l.l_d, l.l_c])
        .collect();
    c.push_floats(*b"HIST", &hist);
    c
}

pub fn state_from_container(c: &Container) -> Result<TrainState> {
    let meta: Meta =
        serde_json::from_slice(c.section(META)?).map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
    let shape = meta.config.image_shape();
    let wrap = |e: Error| Error::Checkpoint(e.to_string());
    let generator = Generator::from_network(read_network(c, *b"GARC", *b"GPAR")?, shape, meta.config.standardize_spectrum)
        .map_err(wrap)?;
    let discriminator = Discriminator::from_network(read_network(c, *b"DARC", *b"DPAR")?, shape).map_err(wrap)?;
    let classifier = Classifier::from_network(read_network(c, *b"CARC", *b"CPAR")?, shape).map_err(wrap)?;
    let hist = c.floats(*b"HIST")?;
    if hist.len() % 5 != 0 {
        return Err(Error::Checkpoint("history section has wrong length".into()));
    }
    let history = hist
        .chunks_exact(5)
        .map(|h| LossBreakdown { l_adv: h[0], l_com: h[1], l_g: h[2], l_d: h[3], l_c: h[4] })
        .collect();
    Ok(TrainState {
        generator_opt: decode_adam(c.section(*b"GOPT")?, generator.network().param_count())?,
        discriminator_opt: decode_adam(c.section(*b"DOPT")?, discriminator.network().param_count())?,
        classifier_opt: decode_adam(c.section(*b"COPT")?, classifier.network().param_count())?,
        config: meta.config,
        generator,
        discriminator,
        classifier,
        epoch: meta.epoch,
        step: meta.step,
        history,
    })
}

pub fn save_checkpoint(state: &TrainState, path: &Path) -> Result<()> {
    state_to_container(state).save(path)
}

pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    state_from_container(&Container::load(path)?)
}
