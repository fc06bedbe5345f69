//! Central finite-difference checks of every layer's backward pass in f64.
//! Each case returns the worst relative error per checked tensor.

use knitpad::nn::layers::*;
use knitpad::nn::*;
use knitpad::seed;
use rand_distr::{Distribution, StandardNormal};

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

pub type Report = Vec<(String, f64)>;

pub fn randn(n: usize, s: u64) -> Vec<f64> {
    let mut rng = seed::rng(s);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

pub fn fill(t: &mut Tensor<f64>, s: u64, scale: f64) {
    let v = randn(t.len(), s);
    t.data_mut().iter_mut().zip(v).for_each(|(d, x)| *d = x * scale);
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Relative error with an absolute floor so exact zeros compare cleanly.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Worst relative error between `analytic` and central differences of `f`
/// around `x`, over at most `limit` evenly spread coordinates.
pub fn fd_error(x: &[f64], analytic: &[f64], limit: usize, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    assert_eq!(x.len(), analytic.len());
    let step = (x.len() / limit).max(1);
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in (0..x.len()).step_by(step) {
        probe[i] = x[i] + FD_STEP;
        let up = f(&probe);
        probe[i] = x[i] - FD_STEP;
        let down = f(&probe);
        probe[i] = x[i];
        worst = worst.max(rel_err(analytic[i], (up - down) / (2.0 * FD_STEP)));
    }
    worst
}

pub fn conv1d() -> Report {
    let (batch, len) = (2, 6);
    let mut conv = Conv1d::<f64>::zeros(3, 4, 3, 1);
    fill(&mut conv.weight, 1, 0.5);
    fill(&mut conv.bias, 2, 0.5);
    let x = randn(batch * len * 3, 3);
    let (y, col) = conv.forward(&x, batch, len).unwrap();
    let r = randn(y.len(), 4);
    let (dx, g) = conv.backward(&r, &col, batch, len);
    let with = |w: Option<&[f64]>, b: Option<&[f64]>| {
        let mut c = conv.clone();
        w.map(|w| c.weight.data_mut().copy_from_slice(w));
        b.map(|b| c.bias.data_mut().copy_from_slice(b));
        dot(&c.forward(&x, batch, len).unwrap().0, &r)
    };
    vec![
        ("conv1d.input".into(), fd_error(&x, &dx, 100, |xp| dot(&conv.forward(xp, batch, len).unwrap().0, &r))),
        ("conv1d.weight".into(), fd_error(conv.weight.data(), g.weight.data(), 100, |w| with(Some(w), None))),
        ("conv1d.bias".into(), fd_error(conv.bias.data(), g.bias.data(), 100, |b| with(None, Some(b)))),
    ]
}

pub fn batch_norm() -> Report {
    let mut bn = BatchNorm1d::<f64>::new(3);
    fill(&mut bn.gamma, 5, 1.0);
    fill(&mut bn.beta, 6, 1.0);
    let x: Vec<f64> = randn(8 * 3, 7).iter().map(|v| 2.0 * v + 1.0).collect();
    let (y, cache) = bn.forward_train(&x);
    let r = randn(y.len(), 8);
    let (dx, g) = bn.backward(&r, &cache);
    let with = |gamma: Option<&[f64]>, beta: Option<&[f64]>| {
        let mut b = bn.clone();
        gamma.map(|v| b.gamma.data_mut().copy_from_slice(v));
        beta.map(|v| b.beta.data_mut().copy_from_slice(v));
        dot(&b.forward_train(&x).0, &r)
    };
    vec![
        ("batch_norm.input".into(), fd_error(&x, &dx, 100, |xp| dot(&bn.forward_train(xp).0, &r))),
        ("batch_norm.gamma".into(), fd_error(bn.gamma.data(), g.gamma.data(), 100, |v| with(Some(v), None))),
        ("batch_norm.beta".into(), fd_error(bn.beta.data(), g.beta.data(), 100, |v| with(None, Some(v)))),
    ]
}

pub fn max_pool() -> Report {
    let pool = MaxPool1d { kernel: 2, stride: 2 };
    let (batch, len, ch) = (2, 7, 3);
    let x = randn(batch * len * ch, 9);
    let (y, arg) = pool.forward(&x, batch, len, ch).unwrap();
    let r = randn(y.len(), 10);
    let dx = MaxPool1d::backward(&r, &arg, x.len());
    vec![("max_pool.input".into(), fd_error(&x, &dx, 100, |xp| dot(&pool.forward(xp, batch, len, ch).unwrap().0, &r)))]
}

pub fn lstm() -> Report {
    let (steps, batch, input, hidden) = (4, 2, 3, 5);
    let mut layer = LstmLayer::<f64>::zeros(input, hidden);
    fill(&mut layer.w_ih, 11, 0.6);
    fill(&mut layer.w_hh, 12, 0.6);
    fill(&mut layer.bias, 13, 0.3);
    let x = randn(steps * batch * input, 14);
    let cache = layer.forward(&x, steps, batch).unwrap();
    let r = randn(cache.hidden.len(), 15);
    let (dx, g) = layer.backward(&r, &x, &cache, steps, batch);
    let loss = |l: &LstmLayer<f64>, xp: &[f64]| dot(&l.forward(xp, steps, batch).unwrap().hidden, &r);
    let mut out = vec![("lstm.input".to_string(), fd_error(&x, &dx, 100, |xp| loss(&layer, xp)))];
    for (name, pick) in [("lstm.w_ih", 0), ("lstm.w_hh", 1), ("lstm.bias", 2)] {
        let get = |l: &LstmLayer<f64>| [&l.w_ih, &l.w_hh, &l.bias][pick].data().to_vec();
        let e = fd_error(&get(&layer), &get(&g), 200, |v| {
            let mut l = layer.clone();
            [&mut l.w_ih, &mut l.w_hh, &mut l.bias][pick].data_mut().copy_from_slice(v);
            loss(&l, &x)
        });
        out.push((name.into(), e));
    }
    out
}

pub fn linear() -> Report {
    let mut lin = Linear::<f64>::zeros(4, 3);
    fill(&mut lin.weight, 16, 1.0);
    fill(&mut lin.bias, 17, 1.0);
    let x = randn(5 * 4, 18);
    let r = randn(5 * 3, 19);
    let (dx, g) = lin.backward(&r, &x, 5);
    let with = |w: Option<&[f64]>, b: Option<&[f64]>| {
        let mut l = lin.clone();
        w.map(|w| l.weight.data_mut().copy_from_slice(w));
        b.map(|b| l.bias.data_mut().copy_from_slice(b));
        dot(&l.forward(&x, 5), &r)
    };
    vec![
        ("linear.input".into(), fd_error(&x, &dx, 100, |xp| dot(&lin.forward(xp, 5), &r))),
        ("linear.weight".into(), fd_error(lin.weight.data(), g.weight.data(), 100, |w| with(Some(w), None))),
        ("linear.bias".into(), fd_error(lin.bias.data(), g.bias.data(), 100, |b| with(None, Some(b)))),
    ]
}

pub fn log_softmax_nll() -> Report {
    let classes = 12;
    let z: Vec<f64> = randn(6 * classes, 20).iter().map(|v| 3.0 * v).collect();
    let labels = [0, 5, 11, 3, 3, 7];
    let y = log_softmax(&z, classes);
    let dz = log_softmax_backward(&nll_grad::<f64>(&labels, classes), &y, classes);
    vec![("log_softmax_nll.logits".into(), fd_error(&z, &dz, 100, |zp| nll_loss(&log_softmax(zp, classes), &labels, classes).unwrap()))]
}

/// Every architectural choice of the full network at toy size.
pub fn small_spec(variant: Variant) -> ModelSpec {
    ModelSpec {
        variant,
        input_channels: 2,
        seq_len: 6,
        conv1: ConvSpec { in_channels: 2, out_channels: 3, kernel: 3, padding: 1 },
        dropout: 0.5,
        conv2: ConvSpec { in_channels: 3, out_channels: 4, kernel: 3, padding: 1 },
        pool: PoolSpec { kernel: 2, stride: 2 },
        lstm_layers: 2,
        hidden: 3,
        classes: 4,
    }
}

/// Parameters drawn from a normal distribution; running variances positive.
pub fn randomized(spec: &ModelSpec, s: u64) -> ModelParams<f64> {
    let mut p = ModelParams::<f64>::zeros(spec).unwrap();
    for (i, e) in p.entries_mut().into_iter().enumerate() {
        let v = randn(e.tensor.len(), seed::derive(s, &[i as u64]));
        let positive = e.name.ends_with("running_var");
        e.tensor.data_mut().iter_mut().zip(v).for_each(|(d, x)| *d = if positive { 0.5 + x.abs() } else { 0.7 * x });
    }
    p
}

/// Training-mode loss (dropout and batch statistics included) against each
/// learnable tensor of the whole network.
pub fn model(variant: Variant) -> Report {
    let spec = small_spec(variant);
    let params = randomized(&spec, 22);
    let x = Tensor::from_vec(&[3, 6, 2], randn(36, 23)).unwrap();
    let labels = [1, 3, 0];
    let (_, grads) = params.loss_and_grads(&x, &labels, 99).unwrap();
    let mut out = Vec::new();
    for (i, entry) in params.entries().into_iter().enumerate() {
        if !entry.learnable {
            continue;
        }
        let analytic = grads.entries()[i].tensor.data().to_vec();
        let e = fd_error(entry.tensor.data(), &analytic, 60, |v| {
            let mut p = params.clone();
            p.entries_mut()[i].tensor.data_mut().copy_from_slice(v);
            p.loss_and_grads(&x, &labels, 99).unwrap().0
        });
        out.push((format!("{}.{}", variant.as_str(), entry.name), e));
    }
    out
}

/// Every case above.
pub fn all() -> Report {
    let mut out = Vec::new();
    for case in [conv1d, batch_norm, max_pool, lstm, linear, log_softmax_nll] {
        out.extend(case());
    }
    out.extend(model(Variant::CnnLstm));
    out.extend(model(Variant::LstmOnly));
    out
}
