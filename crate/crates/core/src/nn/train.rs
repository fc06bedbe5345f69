use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::adam::{adam_step, AdamConfig, AdamState};
use crate::nn::{ModelParams, ModelSpec, Mode, Real, Tensor};
use crate::seed;

/// Samples per forward pass when only predictions are needed.
pub const INFERENCE_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_norm_momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            dropout: 0.6,
            batch_size: 128,
            epochs: 200,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_norm_momentum: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, beta1: self.beta1, beta2: self.beta2, epsilon: self.epsilon }
    }
}

/// Labelled sequences stored back to back as `[n, seq_len, channels]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Examples<T> {
    pub inputs: Vec<T>,
    pub labels: Vec<usize>,
    pub seq_len: usize,
    pub channels: usize,
}

impl<T: Real> Examples<T> {
    pub fn new(inputs: Vec<T>, labels: Vec<usize>, seq_len: usize, channels: usize) -> Result<Self> {
        if inputs.len() != labels.len() * seq_len * channels {
            return Err(Error::invalid(format!(
                "{} values for {} sequences of {seq_len}x{channels}",
                inputs.len(),
                labels.len()
            )));
        }
        Ok(Self { inputs, labels, seq_len, channels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn stride(&self) -> usize {
        self.seq_len * self.channels
    }

    /// Stacks the listed examples into a batch tensor.
    pub fn batch(&self, indices: &[usize]) -> (Tensor<T>, Vec<usize>) {
        let s = self.stride();
        let mut data = Vec::with_capacity(indices.len() * s);
        for &i in indices {
            data.extend_from_slice(&self.inputs[i * s..(i + 1) * s]);
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        (Tensor::from_vec(&[indices.len(), self.seq_len, self.channels], data).unwrap(), labels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub validation_loss: Option<f64>,
    pub validation_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub params: ModelParams<T>,
    pub history: Vec<EpochRecord>,
}

impl<T> TrainOutcome<T> {
    /// Mean validation accuracy over the last `window` epochs (all epochs if
    /// fewer were run).
    pub fn trailing_validation_accuracy(&self, window: usize) -> Option<f64> {
        let accs: Vec<f64> = self.history.iter().filter_map(|r| r.validation_accuracy).collect();
        let tail = &accs[accs.len().saturating_sub(window.max(1))..];
        (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64)
    }
}

fn argmax<T: Real>(row: &[T]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, T::neg_infinity()), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Eval-mode log-probabilities `[n, classes]` for every example.
pub fn predict_log_probs<T: Real>(params: &ModelParams<T>, examples: &Examples<T>) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(examples.len() * params.spec.classes);
    let all: Vec<usize> = (0..examples.len()).collect();
    for chunk in all.chunks(INFERENCE_CHUNK) {
        let (x, _) = examples.batch(chunk);
        out.extend_from_slice(params.forward(&x, Mode::Eval)?.data());
    }
    Ok(out)
}

pub fn predict<T: Real>(params: &ModelParams<T>, examples: &Examples<T>) -> Result<Vec<usize>> {
    let lp = predict_log_probs(params, examples)?;
    Ok(lp.chunks_exact(params.spec.classes).map(argmax).collect())
}

/// Loss and accuracy of eval-mode predictions.
pub fn evaluate<T: Real>(params: &ModelParams<T>, examples: &Examples<T>) -> Result<(f64, f64)> {
    let classes = params.spec.classes;
    let lp = predict_log_probs(params, examples)?;
    let mut loss = 0.0;
    let mut correct = 0;
    for (row, &label) in lp.chunks_exact(classes).zip(&examples.labels) {
        loss -= row[label].to_f64().unwrap();
        correct += usize::from(argmax(row) == label);
    }
    let n = examples.len().max(1) as f64;
    Ok((loss / n, correct as f64 / n))
}

pub fn train<T: Real>(
    train_set: &Examples<T>,
    validation: Option<&Examples<T>>,
    spec: &ModelSpec,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    train_with(train_set, validation, spec, config, |_| {})
}

/// Trains from a Xavier initialization with shuffled mini-batches, calling
/// `on_epoch` after each epoch.
pub fn train_with<T: Real>(
    train_set: &Examples<T>,
    validation: Option<&Examples<T>>,
    spec: &ModelSpec,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let spec = ModelSpec { dropout: config.dropout, ..spec.clone() };
    spec.validate()?;
    for set in std::iter::once(train_set).chain(validation) {
        if set.seq_len != spec.seq_len || set.channels != spec.input_channels {
            return Err(Error::invalid(format!(
                "examples are {}x{}, model expects {}x{}",
                set.seq_len, set.channels, spec.seq_len, spec.input_channels
            )));
        }
        if let Some(bad) = set.labels.iter().find(|&&l| l >= spec.classes) {
            return Err(Error::invalid(format!("label {bad} outside 0..{}", spec.classes)));
        }
    }
    let mut params = ModelParams::<T>::init(&spec, seed::derive(config.seed, &[seed::tag("init")]))?;
    let mut state = AdamState::for_model(&params);
    let adam = config.adam();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut seed::rng(seed::derive(config.seed, &[seed::tag("shuffle"), epoch as u64])));
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let (x, labels) = train_set.batch(idx);
            let dropout_seed = seed::derive(config.seed, &[seed::tag("dropout"), epoch as u64, b as u64]);
            let cache = params.forward_cached(&x, Mode::Train { dropout_seed })?;
            let (loss, grads) = params.backward(&cache, &labels)?;
            let loss = loss.to_f64().unwrap();
            if !loss.is_finite() {
                return Err(Error::numeric(format!("training loss diverged in epoch {epoch}")));
            }
            loss_sum += loss * idx.len() as f64;
            correct += cache
                .log_probs
                .chunks_exact(spec.classes)
                .zip(&labels)
                .filter(|(row, &l)| argmax(row) == l)
                .count();
            adam_step(&mut params, &grads, &mut state, &adam);
            params.update_running_stats(&cache, config.batch_norm_momentum);
        }
        let n = train_set.len() as f64;
        let (validation_loss, validation_accuracy) = match validation {
            Some(v) if !v.is_empty() => {
                let (l, a) = evaluate(&params, v)?;
                (Some(l), Some(a))
            }
            _ => (None, None),
        };
        let record = EpochRecord { epoch, train_loss: loss_sum / n, train_accuracy: correct as f64 / n, validation_loss, validation_accuracy };
        on_epoch(&record);
        history.push(record);
    }
    if !params.is_finite() {
        return Err(Error::numeric("training produced non-finite parameters"));
    }
    Ok(TrainOutcome { params, history })
}
