use crate::nn::{ModelParams, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(sizes: impl IntoIterator<Item = usize>) -> Self {
        let (m, v): (Vec<_>, Vec<_>) = sizes.into_iter().map(|n| (vec![T::zero(); n], vec![T::zero(); n])).unzip();
        Self { step: 0, m, v }
    }

    pub fn for_model(params: &ModelParams<T>) -> Self {
        Self::new(params.learnable().iter().map(|t| t.len()))
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_update<T: Real>(params: &mut [&mut Tensor<T>], grads: &[&Tensor<T>], state: &mut AdamState<T>, config: &AdamConfig) {
    assert_eq!(params.len(), grads.len(), "parameter and gradient lists differ");
    assert_eq!(params.len(), state.m.len(), "optimizer state does not match parameters");
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::lit(config.beta1), T::lit(config.beta2));
    let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
    let correction1 = T::lit(1.0 - config.beta1.powi(t));
    let correction2 = T::lit(1.0 - config.beta2.powi(t));
    let lr = T::lit(config.learning_rate);
    let eps = T::lit(config.epsilon);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        for (((pv, gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mv = b1 * *mv + one_b1 * *gv;
            *vv = b2 * *vv + one_b2 * *gv * *gv;
            let m_hat = *mv / correction1;
            let v_hat = *vv / correction2;
            *pv -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

pub fn adam_step<T: Real>(params: &mut ModelParams<T>, grads: &ModelParams<T>, state: &mut AdamState<T>, config: &AdamConfig) {
    let grads = grads.learnable();
    let mut params = params.learnable_mut();
    adam_update(&mut params, &grads, state, config);
}
