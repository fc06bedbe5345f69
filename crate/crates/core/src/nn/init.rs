use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{ModelParams, ModelSpec, Real, Tensor};
use crate::seed;

/// Fan-in and fan-out of a weight shaped `[out, in, receptive...]`.
pub fn fans(shape: &[usize]) -> Result<(usize, usize)> {
    if shape.len() < 2 || shape.contains(&0) {
        return Err(Error::invalid(format!("xavier init needs a weight of rank >= 2, got {shape:?}")));
    }
    let receptive: usize = shape[2..].iter().product();
    Ok((shape[1] * receptive, shape[0] * receptive))
}

/// Uniform Xavier (Glorot) initialization on `[-a, a]` with
/// `a = sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_init<T: Real>(shape: &[usize], seed_value: u64) -> Result<Tensor<T>> {
    let (fan_in, fan_out) = fans(shape)?;
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut rng = seed::rng(seed_value);
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::lit(rng.random_range(-bound..=bound))).collect();
    Tensor::from_vec(shape, data)
}

/// Initial LSTM forget-gate bias. Starting with the forget gate mostly open
/// lets the final hidden state see the stroke early in training.
pub const FORGET_GATE_BIAS: f64 = 1.0;

impl<T: Real> ModelParams<T> {
    /// Xavier weights, unit batch-norm scale, zero biases except the LSTM
    /// forget gates.
    pub fn init(spec: &ModelSpec, seed_value: u64) -> Result<Self> {
        let mut params = Self::zeros(spec)?;
        let tensor_seed = |name: &str| seed::derive(seed_value, &[seed::tag(name)]);
        if let Some(cnn) = &mut params.cnn {
            for (name, conv) in [("conv1.weight", &mut cnn.conv1), ("conv2.weight", &mut cnn.conv2)] {
                // Drawn in [out, in, kernel] order, stored as [out, kernel, in].
                let (o, k, i) = (conv.out_channels(), conv.kernel(), conv.in_channels());
                let w = xavier_init::<T>(&[o, i, k], tensor_seed(name))?;
                let dst = conv.weight.data_mut();
                for a in 0..o {
                    for b in 0..i {
                        for c in 0..k {
                            dst[(a * k + c) * i + b] = w.data()[(a * i + b) * k + c];
                        }
                    }
                }
            }
        }
        for (l, layer) in params.lstm.iter_mut().enumerate() {
            layer.w_ih = xavier_init(layer.w_ih.shape(), tensor_seed(&format!("lstm.{l}.w_ih")))?;
            layer.w_hh = xavier_init(layer.w_hh.shape(), tensor_seed(&format!("lstm.{l}.w_hh")))?;
            let h = layer.hidden_size();
            layer.bias.data_mut()[h..2 * h].fill(T::lit(FORGET_GATE_BIAS));
        }
        params.head.weight = xavier_init(params.head.weight.shape(), tensor_seed("head.weight"))?;
        Ok(params)
    }
}
