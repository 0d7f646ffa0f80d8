// SPDX-License-Identifier: MIT OR Apache-2.0

//! Per-timestep classifier: a 17-4-2 network with a softmax head, trained by
//! full-batch gradient descent on a class-balanced sample that is redrawn
//! every epoch.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{AuCatalog, AuVector, Timestep, TrialRecord, AU_COUNT};

pub const INPUT: usize = AU_COUNT;
pub const HIDDEN: usize = 4;
pub const OUTPUT: usize = 2;
/// Total number of trainable scalars.
pub const PARAM_COUNT: usize = INPUT * HIDDEN + HIDDEN + HIDDEN * OUTPUT + OUTPUT;

const MODEL_FORMAT: &str = "ausentinel-model";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::InvalidInput(format!("unknown activation {other:?}"))),
        }
    }
}

/// Weights of the 17-4-2 network plus the metadata of the run that produced
/// them. `w1[i][j]` connects input `i` to hidden unit `j`; `w2[j][k]`
/// connects hidden unit `j` to output `k` (0 = no error, 1 = error).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub w1: [[f64; HIDDEN]; INPUT],
    pub b1: [f64; HIDDEN],
    pub w2: [[f64; OUTPUT]; HIDDEN],
    pub b2: [f64; OUTPUT],
    pub activation: Activation,
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl ModelParams {
    pub fn zeros(activation: Activation) -> Self {
        ModelParams {
            w1: [[0.0; HIDDEN]; INPUT],
            b1: [0.0; HIDDEN],
            w2: [[0.0; OUTPUT]; HIDDEN],
            b2: [0.0; OUTPUT],
            activation,
            seed: 0,
            epochs: 0,
            learning_rate: 0.0,
        }
    }

    /// Weights uniform in [-0.5, 0.5] / sqrt(fan_in); biases zero.
    pub fn init(seed: u64, activation: Activation) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ModelParams::zeros(activation);
        p.seed = seed;
        let s1 = 1.0 / (INPUT as f64).sqrt();
        for row in p.w1.iter_mut() {
            for w in row.iter_mut() {
                *w = rng.random_range(-0.5..=0.5) * s1;
            }
        }
        let s2 = 1.0 / (HIDDEN as f64).sqrt();
        for row in p.w2.iter_mut() {
            for w in row.iter_mut() {
                *w = rng.random_range(-0.5..=0.5) * s2;
            }
        }
        p
    }

    /// Row-major flattening: w1, b1, w2, b2.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(PARAM_COUNT);
        v.extend(self.w1.iter().flatten());
        v.extend(&self.b1);
        v.extend(self.w2.iter().flatten());
        v.extend(&self.b2);
        v
    }

    /// Replaces the weights from a flat vector in [`to_flat`](Self::to_flat) order.
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != PARAM_COUNT {
            return Err(Error::ModelIntegrity(format!(
                "expected {PARAM_COUNT} parameters, found {}",
                flat.len()
            )));
        }
        let mut it = flat.iter().copied();
        for row in self.w1.iter_mut() {
            row.iter_mut().for_each(|w| *w = it.next().unwrap());
        }
        self.b1.iter_mut().for_each(|w| *w = it.next().unwrap());
        for row in self.w2.iter_mut() {
            row.iter_mut().for_each(|w| *w = it.next().unwrap());
        }
        self.b2.iter_mut().for_each(|w| *w = it.next().unwrap());
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.w1.iter().flatten().all(|w| w.is_finite())
            && self.b1.iter().all(|w| w.is_finite())
            && self.w2.iter().flatten().all(|w| w.is_finite())
            && self.b2.iter().all(|w| w.is_finite());
        if finite {
            Ok(())
        } else {
            Err(Error::ModelIntegrity("non-finite weight".into()))
        }
    }

    fn hidden(&self, x: &[f64; INPUT]) -> ([f64; HIDDEN], [f64; HIDDEN]) {
        let mut z = self.b1;
        for (xi, row) in x.iter().zip(&self.w1) {
            for (zj, w) in z.iter_mut().zip(row) {
                *zj += xi * w;
            }
        }
        let mut h = [0.0; HIDDEN];
        for (hj, zj) in h.iter_mut().zip(&z) {
            *hj = self.activation.apply(*zj);
        }
        (z, h)
    }

    fn logits(&self, h: &[f64; HIDDEN]) -> [f64; OUTPUT] {
        let mut o = self.b2;
        for (hj, row) in h.iter().zip(&self.w2) {
            for (ok, w) in o.iter_mut().zip(row) {
                *ok += hj * w;
            }
        }
        o
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)
            .map_err(|e| Error::ModelIntegrity(format!("unreadable model file: {e}")))?;
        file.into_params()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Softmax output of the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probabilities {
    pub p_no_error: f64,
    pub p_error: f64,
}

fn softmax(o: [f64; OUTPUT]) -> Probabilities {
    let m = o[0].max(o[1]);
    let e0 = (o[0] - m).exp();
    let e1 = (o[1] - m).exp();
    let s = e0 + e1;
    Probabilities {
        p_no_error: e0 / s,
        p_error: e1 / s,
    }
}

/// Classifies one AU vector.
pub fn forward(params: &ModelParams, x: &AuVector) -> Result<Probabilities> {
    params.validate()?;
    let (_, h) = params.hidden(x.as_array());
    Ok(softmax(params.logits(&h)))
}

/// Confidence weight of a classification: `p_error` when the error class
/// wins outright, otherwise 0. An exact tie counts as no error.
pub fn weigh(p: Probabilities) -> f64 {
    if p.p_error > 0.5 {
        p.p_error
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedClassification {
    pub timestep: usize,
    pub p_error: f64,
    pub weight: f64,
}

/// Classifies and weighs one timestep.
pub fn classify(params: &ModelParams, ts: &Timestep) -> Result<WeightedClassification> {
    let p = forward(params, &ts.au)?;
    Ok(WeightedClassification {
        timestep: ts.index,
        p_error: p.p_error,
        weight: weigh(p),
    })
}

/// Cross-entropy loss of one labeled sample and its gradient with respect to
/// every parameter, flattened in [`ModelParams::to_flat`] order.
pub fn loss_and_gradient(params: &ModelParams, x: &AuVector, is_error: bool) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; PARAM_COUNT];
    let loss = accumulate_gradient(params, x.as_array(), is_error, &mut grad);
    (loss, grad)
}

fn accumulate_gradient(params: &ModelParams, x: &[f64; INPUT], is_error: bool, grad: &mut [f64]) -> f64 {
    let (z, h) = params.hidden(x);
    let p = softmax(params.logits(&h));
    let probs = [p.p_no_error, p.p_error];
    let label = usize::from(is_error);
    let loss = -probs[label].max(f64::MIN_POSITIVE).ln();

    let mut d_out = probs;
    d_out[label] -= 1.0;

    let (g_w1, rest) = grad.split_at_mut(INPUT * HIDDEN);
    let (g_b1, rest) = rest.split_at_mut(HIDDEN);
    let (g_w2, g_b2) = rest.split_at_mut(HIDDEN * OUTPUT);

    let mut d_hidden = [0.0; HIDDEN];
    for j in 0..HIDDEN {
        for k in 0..OUTPUT {
            g_w2[j * OUTPUT + k] += h[j] * d_out[k];
            d_hidden[j] += params.w2[j][k] * d_out[k];
        }
    }
    for k in 0..OUTPUT {
        g_b2[k] += d_out[k];
    }
    for j in 0..HIDDEN {
        let dz = d_hidden[j] * params.activation.derivative(z[j]);
        g_b1[j] += dz;
        for i in 0..INPUT {
            g_w1[i * HIDDEN + j] += x[i] * dz;
        }
    }
    loss
}

/// Mean loss and mean gradient over a batch of (input, label) samples.
pub fn batch_loss_and_gradient(params: &ModelParams, batch: &[(&AuVector, bool)]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; PARAM_COUNT];
    let mut loss = 0.0;
    for (x, y) in batch {
        loss += accumulate_gradient(params, x.as_array(), *y, &mut grad);
    }
    let n = batch.len().max(1) as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    (loss / n, grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub activation: Activation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1000,
            learning_rate: 0.05,
            seed: 7,
            activation: Activation::Relu,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    /// Mean cross-entropy on this epoch's sample, before the update.
    pub loss: f64,
    pub error_samples: usize,
    pub no_error_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub error_timesteps: usize,
    pub no_error_timesteps: usize,
    /// False when there were fewer no-error than error timesteps and the
    /// whole set was used every epoch.
    pub undersampled: bool,
    pub epochs: Vec<EpochReport>,
}

/// Trains a fresh network on every timestep of `corpus`.
pub fn train(corpus: &[TrialRecord], cfg: &TrainConfig) -> Result<(ModelParams, TrainReport)> {
    let params = ModelParams::init(cfg.seed, cfg.activation);
    optimize(params, corpus, cfg, cfg.seed)
}

/// Continues training `params` on `trials` with the same balancing rule.
pub fn finetune(params: &ModelParams, trials: &[TrialRecord], cfg: &TrainConfig) -> Result<(ModelParams, TrainReport)> {
    if trials.is_empty() {
        return Err(Error::UnusableCorpus("no trials to fine-tune on".into()));
    }
    params.validate()?;
    let (mut tuned, report) = optimize(params.clone(), trials, cfg, cfg.seed ^ 0x5eed_f1e7)?;
    tuned.epochs = params.epochs + cfg.epochs;
    tuned.seed = params.seed;
    Ok((tuned, report))
}

fn optimize(
    mut params: ModelParams,
    corpus: &[TrialRecord],
    cfg: &TrainConfig,
    sampling_seed: u64,
) -> Result<(ModelParams, TrainReport)> {
    if !(cfg.learning_rate.is_finite() && cfg.learning_rate > 0.0) {
        return Err(Error::InvalidInput(format!(
            "learning rate must be positive, got {}",
            cfg.learning_rate
        )));
    }
    let mut errors: Vec<&AuVector> = Vec::new();
    let mut clean: Vec<&AuVector> = Vec::new();
    for trial in corpus {
        trial.validate()?;
        for (ts, label) in trial.timesteps.iter().zip(trial.labels()) {
            if label {
                errors.push(&ts.au);
            } else {
                clean.push(&ts.au);
            }
        }
    }
    if errors.is_empty() {
        return Err(Error::UnusableCorpus(
            "no error-labeled timesteps; training needs at least one".into(),
        ));
    }
    let undersampled = clean.len() >= errors.len();
    if !undersampled {
        log::warn!(
            "only {} no-error timesteps for {} error timesteps; training on the full set",
            clean.len(),
            errors.len()
        );
    }

    // Skip ahead so the sampling stream differs from the init stream.
    let mut rng = ChaCha8Rng::seed_from_u64(sampling_seed);
    rng.set_stream(1);
    let mut report = TrainReport {
        error_timesteps: errors.len(),
        no_error_timesteps: clean.len(),
        undersampled,
        epochs: Vec::with_capacity(cfg.epochs),
    };
    let mut order: Vec<usize> = (0..clean.len()).collect();
    let mut batch: Vec<(&AuVector, bool)> = Vec::with_capacity(2 * errors.len());
    let mut flat = params.to_flat();
    for epoch in 0..cfg.epochs {
        batch.clear();
        batch.extend(errors.iter().map(|x| (*x, true)));
        let take = if undersampled {
            order.partial_shuffle(&mut rng, errors.len());
            errors.len()
        } else {
            clean.len()
        };
        batch.extend(order[..take].iter().map(|&i| (clean[i], false)));
        let n_err = batch.iter().filter(|(_, y)| *y).count();
        let n_clean = batch.len() - n_err;
        if undersampled {
            assert_eq!(n_err, n_clean, "undersampling produced unequal class counts");
        }

        let (loss, grad) = batch_loss_and_gradient(&params, &batch);
        for (w, g) in flat.iter_mut().zip(&grad) {
            *w -= cfg.learning_rate * g;
        }
        params.set_flat(&flat)?;
        report.epochs.push(EpochReport {
            epoch,
            loss,
            error_samples: n_err,
            no_error_samples: n_clean,
        });
    }
    params.validate()?;
    params.epochs = cfg.epochs;
    params.learning_rate = cfg.learning_rate;
    Ok((params, report))
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    catalog: Vec<String>,
    catalog_hash: String,
    activation: Activation,
    seed: u64,
    epochs: usize,
    learning_rate: f64,
    input: usize,
    hidden: usize,
    output: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

impl From<&ModelParams> for ModelFile {
    fn from(p: &ModelParams) -> Self {
        ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            catalog: AuCatalog::ids().iter().map(|s| s.to_string()).collect(),
            catalog_hash: AuCatalog::hash(),
            activation: p.activation,
            seed: p.seed,
            epochs: p.epochs,
            learning_rate: p.learning_rate,
            input: INPUT,
            hidden: HIDDEN,
            output: OUTPUT,
            w1: p.w1.iter().flatten().copied().collect(),
            b1: p.b1.to_vec(),
            w2: p.w2.iter().flatten().copied().collect(),
            b2: p.b2.to_vec(),
        }
    }
}

impl ModelFile {
    fn into_params(self) -> Result<ModelParams> {
        if self.format != MODEL_FORMAT {
            return Err(Error::ModelIntegrity(format!("unknown format {:?}", self.format)));
        }
        if self.version != MODEL_VERSION {
            return Err(Error::ModelIntegrity(format!(
                "unsupported model version {} (expected {MODEL_VERSION})",
                self.version
            )));
        }
        if self.catalog_hash != AuCatalog::hash() {
            return Err(Error::CatalogMismatch("model catalog hash differs".into()));
        }
        AuCatalog::check_ordering(&self.catalog)?;
        if (self.input, self.hidden, self.output) != (INPUT, HIDDEN, OUTPUT) {
            return Err(Error::ModelIntegrity(format!(
                "shape {}-{}-{} (expected {INPUT}-{HIDDEN}-{OUTPUT})",
                self.input, self.hidden, self.output
            )));
        }
        let shapes = [
            (self.w1.len(), INPUT * HIDDEN),
            (self.b1.len(), HIDDEN),
            (self.w2.len(), HIDDEN * OUTPUT),
            (self.b2.len(), OUTPUT),
        ];
        if shapes.iter().any(|(a, b)| a != b) {
            return Err(Error::ModelIntegrity("weight array length mismatch".into()));
        }
        let mut p = ModelParams::zeros(self.activation);
        let flat: Vec<f64> = self
            .w1
            .into_iter()
            .chain(self.b1)
            .chain(self.w2)
            .chain(self.b2)
            .collect();
        p.set_flat(&flat)?;
        p.seed = self.seed;
        p.epochs = self.epochs;
        p.learning_rate = self.learning_rate;
        p.validate()?;
        Ok(p)
    }
}
