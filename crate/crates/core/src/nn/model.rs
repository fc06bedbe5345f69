use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gesture::NUM_CLASSES;
use crate::nn::layers::{
    dropout_mask, log_softmax, log_softmax_backward, nll_grad, nll_loss, relu_backward_in_place,
    relu_in_place, BatchNorm1d, BatchNormCache, Conv1d, Linear, LstmCache, LstmLayer, MaxPool1d,
};
use crate::nn::{FlushDenormals, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    CnnLstm,
    LstmOnly,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::CnnLstm => "cnn_lstm",
            Variant::LstmOnly => "lstm_only",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub padding: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub kernel: usize,
    pub stride: usize,
}

/// Network architecture. The convolutional fields are ignored by the
/// LSTM-only variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: Variant,
    pub input_channels: usize,
    pub seq_len: usize,
    pub conv1: ConvSpec,
    pub dropout: f64,
    pub conv2: ConvSpec,
    pub pool: PoolSpec,
    pub lstm_layers: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self::cnn_lstm()
    }
}

impl ModelSpec {
    pub fn cnn_lstm() -> Self {
        Self {
            variant: Variant::CnnLstm,
            input_channels: 4,
            seq_len: 250,
            conv1: ConvSpec { in_channels: 4, out_channels: 32, kernel: 7, padding: 3 },
            dropout: 0.6,
            conv2: ConvSpec { in_channels: 32, out_channels: 64, kernel: 5, padding: 2 },
            pool: PoolSpec { kernel: 2, stride: 2 },
            lstm_layers: 3,
            hidden: 100,
            classes: NUM_CLASSES,
        }
    }

    pub fn lstm_only() -> Self {
        Self { variant: Variant::LstmOnly, ..Self::cnn_lstm() }
    }

    fn pool(&self) -> MaxPool1d {
        MaxPool1d { kernel: self.pool.kernel, stride: self.pool.stride }
    }

    /// Sequence length and feature width entering the LSTM stack.
    pub fn recurrent_input(&self) -> Result<(usize, usize)> {
        match self.variant {
            Variant::LstmOnly => Ok((self.seq_len, self.input_channels)),
            Variant::CnnLstm => {
                let c1 = Conv1d::<f64>::zeros(self.conv1.in_channels, self.conv1.out_channels, self.conv1.kernel, self.conv1.padding);
                let c2 = Conv1d::<f64>::zeros(self.conv2.in_channels, self.conv2.out_channels, self.conv2.kernel, self.conv2.padding);
                let len = c2.out_len(c1.out_len(self.seq_len)?)?;
                Ok((self.pool().out_len(len)?, self.conv2.out_channels))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::invalid(m));
        if self.input_channels == 0 || self.seq_len == 0 || self.classes == 0 {
            return fail("model dimensions must be positive".into());
        }
        if self.lstm_layers == 0 || self.hidden == 0 {
            return fail("the LSTM stack needs at least one layer and one unit".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.variant == Variant::CnnLstm {
            if self.conv1.in_channels != self.input_channels {
                return fail(format!("conv1 takes {} channels, input has {}", self.conv1.in_channels, self.input_channels));
            }
            if self.conv2.in_channels != self.conv1.out_channels {
                return fail(format!("conv2 takes {} channels, conv1 emits {}", self.conv2.in_channels, self.conv1.out_channels));
            }
            if [self.conv1.out_channels, self.conv1.kernel, self.conv2.out_channels, self.conv2.kernel].contains(&0) {
                return fail("convolution sizes must be positive".into());
            }
        }
        self.recurrent_input().map(|_| ())
    }
}

/// Convolutional front end: conv, ReLU, batch norm, dropout, conv, ReLU,
/// max pool.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnStage<T> {
    pub conv1: Conv1d<T>,
    pub bn1: BatchNorm1d<T>,
    pub conv2: Conv1d<T>,
}

/// Every tensor of a model, learnable or not.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub spec: ModelSpec,
    pub cnn: Option<CnnStage<T>>,
    pub lstm: Vec<LstmLayer<T>>,
    pub head: Linear<T>,
}

/// A named tensor and whether the optimizer updates it.
pub struct Entry<'a, T> {
    pub name: String,
    pub tensor: &'a Tensor<T>,
    pub learnable: bool,
}

pub struct EntryMut<'a, T> {
    pub name: String,
    pub tensor: &'a mut Tensor<T>,
    pub learnable: bool,
}

macro_rules! entries_body {
    ($self:ident, $ref:ident, $entry:ident, $($mut_kw:tt)?) => {{
        let mut out = Vec::new();
        macro_rules! push {
            ($name:expr, $tensor:expr, $learnable:expr) => {
                out.push($entry { name: $name, tensor: $tensor, learnable: $learnable })
            };
        }
        if let Some(cnn) = &$($mut_kw)? $self.cnn {
            push!("conv1.weight".into(), &$($mut_kw)? cnn.conv1.weight, true);
            push!("conv1.bias".into(), &$($mut_kw)? cnn.conv1.bias, true);
            push!("bn1.gamma".into(), &$($mut_kw)? cnn.bn1.gamma, true);
            push!("bn1.beta".into(), &$($mut_kw)? cnn.bn1.beta, true);
            push!("bn1.running_mean".into(), &$($mut_kw)? cnn.bn1.running_mean, false);
            push!("bn1.running_var".into(), &$($mut_kw)? cnn.bn1.running_var, false);
            push!("conv2.weight".into(), &$($mut_kw)? cnn.conv2.weight, true);
            push!("conv2.bias".into(), &$($mut_kw)? cnn.conv2.bias, true);
        }
        for (l, layer) in $self.lstm.$ref().enumerate() {
            push!(format!("lstm.{l}.w_ih"), &$($mut_kw)? layer.w_ih, true);
            push!(format!("lstm.{l}.w_hh"), &$($mut_kw)? layer.w_hh, true);
            push!(format!("lstm.{l}.bias"), &$($mut_kw)? layer.bias, true);
        }
        push!("head.weight".into(), &$($mut_kw)? $self.head.weight, true);
        push!("head.bias".into(), &$($mut_kw)? $self.head.bias, true);
        out
    }};
}

impl<T: Real> ModelParams<T> {
    /// All-zero tensors (unit batch-norm scale and variance) shaped by `spec`.
    pub fn zeros(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let cnn = (spec.variant == Variant::CnnLstm).then(|| CnnStage {
            conv1: Conv1d::zeros(spec.conv1.in_channels, spec.conv1.out_channels, spec.conv1.kernel, spec.conv1.padding),
            bn1: BatchNorm1d::new(spec.conv1.out_channels),
            conv2: Conv1d::zeros(spec.conv2.in_channels, spec.conv2.out_channels, spec.conv2.kernel, spec.conv2.padding),
        });
        let (_, features) = spec.recurrent_input()?;
        let lstm = (0..spec.lstm_layers)
            .map(|l| LstmLayer::zeros(if l == 0 { features } else { spec.hidden }, spec.hidden))
            .collect();
        Ok(Self { spec: spec.clone(), cnn, lstm, head: Linear::zeros(spec.hidden, spec.classes) })
    }

    pub fn entries(&self) -> Vec<Entry<'_, T>> {
        entries_body!(self, iter, Entry,)
    }

    pub fn entries_mut(&mut self) -> Vec<EntryMut<'_, T>> {
        entries_body!(self, iter_mut, EntryMut, mut)
    }

    pub fn learnable(&self) -> Vec<&Tensor<T>> {
        self.entries().into_iter().filter(|e| e.learnable).map(|e| e.tensor).collect()
    }

    pub fn learnable_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.entries_mut().into_iter().filter(|e| e.learnable).map(|e| e.tensor).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.learnable().iter().map(|t| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        let mut out = ModelParams::<U>::zeros(&self.spec).unwrap();
        for (dst, src) in out.entries_mut().into_iter().zip(self.entries()) {
            *dst.tensor = src.tensor.cast();
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.entries().iter().all(|e| e.tensor.is_finite())
    }

    pub fn update_running_stats(&mut self, cache: &ForwardCache<T>, momentum: f64) {
        if let (Some(cnn), Some(c)) = (&mut self.cnn, &cache.cnn) {
            if let Some(bn) = &c.bn {
                cnn.bn1.update_running(bn, momentum);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// Dropout active with a mask drawn from `dropout_seed`, batch-norm on
    /// batch statistics.
    Train { dropout_seed: u64 },
}

#[derive(Debug, Clone)]
pub struct CnnCache<T> {
    col1: Vec<T>,
    relu1: Vec<T>,
    bn: Option<BatchNormCache<T>>,
    mask: Option<Vec<T>>,
    len1: usize,
    col2: Vec<T>,
    relu2: Vec<T>,
    pool_arg: Vec<u32>,
}

/// Activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    pub batch: usize,
    pub steps: usize,
    cnn: Option<CnnCache<T>>,
    /// Time-major input of the first LSTM layer.
    lstm_input: Vec<T>,
    lstm: Vec<LstmCache<T>>,
    last_hidden: Vec<T>,
    pub log_probs: Vec<T>,
}

fn to_time_major<T: Real>(x: &[T], batch: usize, steps: usize, width: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for b in 0..batch {
        for t in 0..steps {
            out[(t * batch + b) * width..][..width].copy_from_slice(&x[(b * steps + t) * width..][..width]);
        }
    }
    out
}

fn to_batch_major<T: Real>(x: &[T], batch: usize, steps: usize, width: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for b in 0..batch {
        for t in 0..steps {
            out[(b * steps + t) * width..][..width].copy_from_slice(&x[(t * batch + b) * width..][..width]);
        }
    }
    out
}

fn check_input<T: Real>(spec: &ModelSpec, input: &Tensor<T>) -> Result<usize> {
    let shape = input.shape();
    if shape.len() != 3 || shape[1] != spec.seq_len || shape[2] != spec.input_channels {
        return Err(Error::invalid(format!(
            "input shape {shape:?} does not match [batch, {}, {}]",
            spec.seq_len, spec.input_channels
        )));
    }
    if shape[0] == 0 {
        return Err(Error::invalid("empty batch"));
    }
    Ok(shape[0])
}

impl<T: Real> ModelParams<T> {
    /// Runs the network on `[batch, seq_len, channels]` input and returns
    /// log-probabilities `[batch, classes]`.
    pub fn forward(&self, input: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let cache = self.forward_cached(input, mode)?;
        let batch = cache.batch;
        Tensor::from_vec(&[batch, self.spec.classes], cache.log_probs)
    }

    pub fn forward_cached(&self, input: &Tensor<T>, mode: Mode) -> Result<ForwardCache<T>> {
        let _ftz = FlushDenormals::new();
        let batch = check_input(&self.spec, input)?;
        let len0 = self.spec.seq_len;
        let (features, steps, width, cnn_cache) = match &self.cnn {
            None => (input.data().to_vec(), len0, self.spec.input_channels, None),
            Some(cnn) => {
                let (mut a1, col1) = cnn.conv1.forward(input.data(), batch, len0)?;
                relu_in_place(&mut a1);
                let len1 = a1.len() / (batch * cnn.conv1.out_channels());
                let (mut h, bn) = match mode {
                    Mode::Train { .. } => {
                        let (y, c) = cnn.bn1.forward_train(&a1);
                        (y, Some(c))
                    }
                    Mode::Eval => (cnn.bn1.forward_eval(&a1), None),
                };
                let mask = match mode {
                    Mode::Train { dropout_seed } if self.spec.dropout > 0.0 => {
                        let m = dropout_mask::<T>(h.len(), self.spec.dropout, dropout_seed);
                        h.iter_mut().zip(&m).for_each(|(v, k)| *v *= *k);
                        Some(m)
                    }
                    _ => None,
                };
                let (mut a2, col2) = cnn.conv2.forward(&h, batch, len1)?;
                relu_in_place(&mut a2);
                let c2 = cnn.conv2.out_channels();
                let len2 = a2.len() / (batch * c2);
                let (pooled, pool_arg) = self.spec.pool().forward(&a2, batch, len2, c2)?;
                let steps = pooled.len() / (batch * c2);
                let cache = CnnCache { col1, relu1: a1, bn, mask, len1, col2, relu2: a2, pool_arg };
                (pooled, steps, c2, Some(cache))
            }
        };
        let lstm_input = to_time_major(&features, batch, steps, width);
        let mut caches: Vec<LstmCache<T>> = Vec::with_capacity(self.lstm.len());
        for layer in &self.lstm {
            let x = caches.last().map_or(&lstm_input, |c| &c.hidden);
            let c = layer.forward(x, steps, batch)?;
            caches.push(c);
        }
        let h = self.spec.hidden;
        let top = &caches.last().unwrap().hidden;
        let last_hidden = top[(steps - 1) * batch * h..].to_vec();
        let logits = self.head.forward(&last_hidden, batch);
        let log_probs = log_softmax(&logits, self.spec.classes);
        let out = ForwardCache { batch, steps, cnn: cnn_cache, lstm_input, lstm: caches, last_hidden, log_probs };
        debug_assert!(out.log_probs.iter().all(|v| v.is_finite()), "non-finite log-probabilities");
        Ok(out)
    }

    /// Gradient of the mean NLL loss with respect to every learnable
    /// tensor, from a training-mode forward pass. Non-learnable slots of
    /// the result are zero.
    pub fn backward(&self, cache: &ForwardCache<T>, labels: &[usize]) -> Result<(T, ModelParams<T>)> {
        let classes = self.spec.classes;
        let loss = nll_loss(&cache.log_probs, labels, classes)?;
        let _ftz = FlushDenormals::new();
        let (batch, steps, h) = (cache.batch, cache.steps, self.spec.hidden);
        let mut grads = ModelParams::<T>::zeros(&self.spec)?;
        let dlogp = nll_grad::<T>(labels, classes);
        let dz = log_softmax_backward(&dlogp, &cache.log_probs, classes);
        let (dlast, ghead) = self.head.backward(&dz, &cache.last_hidden, batch);
        grads.head = ghead;
        let mut dh = vec![T::zero(); steps * batch * h];
        dh[(steps - 1) * batch * h..].copy_from_slice(&dlast);
        for l in (0..self.lstm.len()).rev() {
            let x = if l == 0 { &cache.lstm_input } else { &cache.lstm[l - 1].hidden };
            let (dx, g) = self.lstm[l].backward(&dh, x, &cache.lstm[l], steps, batch);
            grads.lstm[l] = g;
            dh = dx;
        }
        if let (Some(cnn), Some(c)) = (&self.cnn, &cache.cnn) {
            let bn_cache = c.bn.as_ref().ok_or_else(|| Error::invalid("backward needs a training-mode forward pass"))?;
            let width = cnn.conv2.out_channels();
            let dpool = to_batch_major(&dh, batch, steps, width);
            let mut d = MaxPool1d::backward(&dpool, &c.pool_arg, c.relu2.len());
            relu_backward_in_place(&mut d, &c.relu2);
            let (mut d, gconv2) = cnn.conv2.backward(&d, &c.col2, batch, c.len1);
            if let Some(mask) = &c.mask {
                d.iter_mut().zip(mask).for_each(|(v, k)| *v *= *k);
            }
            let (mut d, gbn) = cnn.bn1.backward(&d, bn_cache);
            relu_backward_in_place(&mut d, &c.relu1);
            let (_, gconv1) = cnn.conv1.backward(&d, &c.col1, batch, self.spec.seq_len);
            grads.cnn = Some(CnnStage { conv1: gconv1, bn1: gbn, conv2: gconv2 });
        }
        Ok((loss, grads))
    }

    /// Forward in training mode and backward in one call.
    pub fn loss_and_grads(&self, input: &Tensor<T>, labels: &[usize], dropout_seed: u64) -> Result<(T, ModelParams<T>)> {
        let cache = self.forward_cached(input, Mode::Train { dropout_seed })?;
        self.backward(&cache, labels)
    }
}
