//! Layer kernels. Activations are channels-last (`[batch, time, channels]`)
//! for the convolutional stage and time-major (`[time, batch, features]`)
//! for the recurrent stage, so every heavy step is a single GEMM.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Real, Tensor};
use crate::seed;

pub const BATCH_NORM_EPS: f64 = 1e-5;

fn add_row_bias<T: Real>(y: &mut [T], bias: &[T]) {
    for row in y.chunks_exact_mut(bias.len()) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += *b;
        }
    }
}

fn column_sums<T: Real>(x: &[T], cols: usize, out: &mut [T]) {
    out.iter_mut().for_each(|v| *v = T::zero());
    for row in x.chunks_exact(cols) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += *v;
        }
    }
}

/// One-dimensional convolution over time with zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d<T> {
    /// `[out_channels, kernel, in_channels]`.
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub padding: usize,
}

impl<T: Real> Conv1d<T> {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize, padding: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[out_channels, kernel, in_channels]),
            bias: Tensor::zeros(&[out_channels]),
            padding,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn out_len(&self, len: usize) -> Result<usize> {
        (len + 2 * self.padding)
            .checked_sub(self.kernel())
            .map(|n| n + 1)
            .ok_or_else(|| Error::invalid(format!("sequence of {len} is shorter than kernel {}", self.kernel())))
    }

    /// Returns the output `[batch, out_len, out_channels]` and the unfolded
    /// input needed by [`Conv1d::backward`].
    pub fn forward(&self, x: &[T], batch: usize, len: usize) -> Result<(Vec<T>, Vec<T>)> {
        let (cin, k, cout) = (self.in_channels(), self.kernel(), self.out_channels());
        if x.len() != batch * len * cin {
            return Err(Error::invalid(format!("conv input has {} values, expected {}", x.len(), batch * len * cin)));
        }
        let out_len = self.out_len(len)?;
        let width = k * cin;
        let mut col = vec![T::zero(); batch * out_len * width];
        for b in 0..batch {
            for t in 0..out_len {
                let row = &mut col[(b * out_len + t) * width..][..width];
                for kk in 0..k {
                    let src = t + kk;
                    if src < self.padding || src - self.padding >= len {
                        continue;
                    }
                    let from = (b * len + src - self.padding) * cin;
                    row[kk * cin..(kk + 1) * cin].copy_from_slice(&x[from..from + cin]);
                }
            }
        }
        let mut y = vec![T::zero(); batch * out_len * cout];
        T::gemm(false, true, batch * out_len, cout, width, T::one(), &col, self.weight.data(), T::zero(), &mut y);
        add_row_bias(&mut y, self.bias.data());
        Ok((y, col))
    }

    pub fn backward(&self, dy: &[T], col: &[T], batch: usize, len: usize) -> (Vec<T>, Self) {
        let (cin, k, cout) = (self.in_channels(), self.kernel(), self.out_channels());
        let out_len = dy.len() / (batch * cout);
        let width = k * cin;
        let rows = batch * out_len;
        let mut grad = Self::zeros(cin, cout, k, self.padding);
        T::gemm(true, false, cout, width, rows, T::one(), dy, col, T::zero(), grad.weight.data_mut());
        column_sums(dy, cout, grad.bias.data_mut());
        let mut dcol = vec![T::zero(); rows * width];
        T::gemm(false, false, rows, width, cout, T::one(), dy, self.weight.data(), T::zero(), &mut dcol);
        let mut dx = vec![T::zero(); batch * len * cin];
        for b in 0..batch {
            for t in 0..out_len {
                let row = &dcol[(b * out_len + t) * width..][..width];
                for kk in 0..k {
                    let src = t + kk;
                    if src < self.padding || src - self.padding >= len {
                        continue;
                    }
                    let to = (b * len + src - self.padding) * cin;
                    for (d, g) in dx[to..to + cin].iter_mut().zip(&row[kk * cin..(kk + 1) * cin]) {
                        *d += *g;
                    }
                }
            }
        }
        (dx, grad)
    }
}

pub fn relu_in_place<T: Real>(x: &mut [T]) {
    for v in x {
        *v = v.max(T::zero());
    }
}

/// Zeroes gradient entries whose forward output was clipped.
pub fn relu_backward_in_place<T: Real>(dy: &mut [T], y: &[T]) {
    for (d, v) in dy.iter_mut().zip(y) {
        if *v <= T::zero() {
            *d = T::zero();
        }
    }
}

/// Batch normalization over the last (channel) axis.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm1d<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
}

/// Per-batch statistics from a training-mode pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<T>,
    /// Unbiased variance, the value blended into the running estimate.
    pub var_unbiased: Vec<T>,
}

impl<T: Real> BatchNorm1d<T> {
    pub fn new(channels: usize) -> Self {
        let ones = Tensor::from_vec(&[channels], vec![T::one(); channels]).unwrap();
        Self {
            gamma: ones.clone(),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: ones,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward_train(&self, x: &[T]) -> (Vec<T>, BatchNormCache<T>) {
        let c = self.channels();
        let n = x.len() / c;
        let nt = T::lit(n as f64);
        let mut mean = vec![T::zero(); c];
        column_sums(x, c, &mut mean);
        mean.iter_mut().for_each(|m| *m /= nt);
        let mut var = vec![T::zero(); c];
        for row in x.chunks_exact(c) {
            for ((v, xv), m) in var.iter_mut().zip(row).zip(&mean) {
                let d = *xv - *m;
                *v += d * d;
            }
        }
        let eps = T::lit(BATCH_NORM_EPS);
        let inv_std: Vec<T> = var.iter().map(|v| T::one() / (*v / nt + eps).sqrt()).collect();
        let var_unbiased = var.iter().map(|v| *v / T::lit((n.max(2) - 1) as f64)).collect();
        let mut xhat = vec![T::zero(); x.len()];
        let mut y = vec![T::zero(); x.len()];
        for ((xr, hr), yr) in x.chunks_exact(c).zip(xhat.chunks_exact_mut(c)).zip(y.chunks_exact_mut(c)) {
            for j in 0..c {
                hr[j] = (xr[j] - mean[j]) * inv_std[j];
                yr[j] = self.gamma.data()[j] * hr[j] + self.beta.data()[j];
            }
        }
        (y, BatchNormCache { xhat, inv_std, mean, var_unbiased })
    }

    pub fn forward_eval(&self, x: &[T]) -> Vec<T> {
        let c = self.channels();
        let eps = T::lit(BATCH_NORM_EPS);
        let scale: Vec<T> = (0..c)
            .map(|j| self.gamma.data()[j] / (self.running_var.data()[j] + eps).sqrt())
            .collect();
        let mut y = x.to_vec();
        for row in y.chunks_exact_mut(c) {
            for j in 0..c {
                row[j] = (row[j] - self.running_mean.data()[j]) * scale[j] + self.beta.data()[j];
            }
        }
        y
    }

    pub fn backward(&self, dy: &[T], cache: &BatchNormCache<T>) -> (Vec<T>, Self) {
        let c = self.channels();
        let n = T::lit((dy.len() / c) as f64);
        let mut grad = Self::new(c);
        let mut sum_dxhat = vec![T::zero(); c];
        let mut sum_dxhat_xhat = vec![T::zero(); c];
        let mut dgamma = vec![T::zero(); c];
        let mut dbeta = vec![T::zero(); c];
        for (dr, hr) in dy.chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
            for j in 0..c {
                dgamma[j] += dr[j] * hr[j];
                dbeta[j] += dr[j];
                let dxhat = dr[j] * self.gamma.data()[j];
                sum_dxhat[j] += dxhat;
                sum_dxhat_xhat[j] += dxhat * hr[j];
            }
        }
        let mut dx = vec![T::zero(); dy.len()];
        for ((dr, hr), out) in dy.chunks_exact(c).zip(cache.xhat.chunks_exact(c)).zip(dx.chunks_exact_mut(c)) {
            for j in 0..c {
                let dxhat = dr[j] * self.gamma.data()[j];
                out[j] = cache.inv_std[j] / n * (n * dxhat - sum_dxhat[j] - hr[j] * sum_dxhat_xhat[j]);
            }
        }
        grad.gamma = Tensor::from_vec(&[c], dgamma).unwrap();
        grad.beta = Tensor::from_vec(&[c], dbeta).unwrap();
        grad.running_var = Tensor::zeros(&[c]);
        (dx, grad)
    }

    /// Blends batch statistics into the running estimates.
    pub fn update_running(&mut self, cache: &BatchNormCache<T>, momentum: f64) {
        let m = T::lit(momentum);
        let keep = T::one() - m;
        for (r, b) in self.running_mean.data_mut().iter_mut().zip(&cache.mean) {
            *r = keep * *r + m * *b;
        }
        for (r, b) in self.running_var.data_mut().iter_mut().zip(&cache.var_unbiased) {
            *r = keep * *r + m * *b;
        }
    }
}

/// Inverted-dropout mask: each entry is 0 with probability `p`, otherwise
/// `1 / (1 - p)`.
pub fn dropout_mask<T: Real>(len: usize, p: f64, seed_value: u64) -> Vec<T> {
    let mut rng = seed::rng(seed_value);
    let keep = T::lit(1.0 / (1.0 - p));
    (0..len).map(|_| if rng.random::<f64>() < p { T::zero() } else { keep }).collect()
}

/// Max pooling over time on channels-last input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool1d {
    pub kernel: usize,
    pub stride: usize,
}

impl MaxPool1d {
    pub fn out_len(&self, len: usize) -> Result<usize> {
        if self.kernel == 0 || self.stride == 0 || len < self.kernel {
            return Err(Error::invalid(format!("cannot pool {len} steps with kernel {}", self.kernel)));
        }
        Ok((len - self.kernel) / self.stride + 1)
    }

    /// Returns pooled values and, for each output, the flat index of the
    /// input that won.
    pub fn forward<T: Real>(&self, x: &[T], batch: usize, len: usize, channels: usize) -> Result<(Vec<T>, Vec<u32>)> {
        let out_len = self.out_len(len)?;
        let mut y = Vec::with_capacity(batch * out_len * channels);
        let mut arg = Vec::with_capacity(y.capacity());
        for b in 0..batch {
            for t in 0..out_len {
                for c in 0..channels {
                    let mut best = (b * len + t * self.stride) * channels + c;
                    for k in 1..self.kernel {
                        let i = (b * len + t * self.stride + k) * channels + c;
                        if x[i] > x[best] {
                            best = i;
                        }
                    }
                    y.push(x[best]);
                    arg.push(best as u32);
                }
            }
        }
        Ok((y, arg))
    }

    pub fn backward<T: Real>(dy: &[T], arg: &[u32], input_len: usize) -> Vec<T> {
        let mut dx = vec![T::zero(); input_len];
        for (d, &i) in dy.iter().zip(arg) {
            dx[i as usize] += *d;
        }
        dx
    }
}

/// One LSTM layer with gate order input, forget, cell, output and a single
/// bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer<T> {
    /// `[4 * hidden, input]`.
    pub w_ih: Tensor<T>,
    /// `[4 * hidden, hidden]`.
    pub w_hh: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Activations retained for backpropagation through time, all time-major.
#[derive(Debug, Clone)]
pub struct LstmCache<T> {
    /// Activated gates `[steps, batch, 4 * hidden]`.
    pub gates: Vec<T>,
    pub cells: Vec<T>,
    pub tanh_cells: Vec<T>,
    /// Hidden states `[steps, batch, hidden]`, also the layer output.
    pub hidden: Vec<T>,
}

impl<T: Real> LstmLayer<T> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_ih: Tensor::zeros(&[4 * hidden, input]),
            w_hh: Tensor::zeros(&[4 * hidden, hidden]),
            bias: Tensor::zeros(&[4 * hidden]),
        }
    }

    pub fn input_size(&self) -> usize {
        self.w_ih.shape()[1]
    }

    pub fn hidden_size(&self) -> usize {
        self.w_hh.shape()[1]
    }

    /// Runs the layer from zero initial state over time-major `x`.
    pub fn forward(&self, x: &[T], steps: usize, batch: usize) -> Result<LstmCache<T>> {
        let (input, h) = (self.input_size(), self.hidden_size());
        if x.len() != steps * batch * input {
            return Err(Error::invalid(format!("lstm input has {} values, expected {}", x.len(), steps * batch * input)));
        }
        let g4 = 4 * h;
        let mut gates = vec![T::zero(); steps * batch * g4];
        T::gemm(false, true, steps * batch, g4, input, T::one(), x, self.w_ih.data(), T::zero(), &mut gates);
        add_row_bias(&mut gates, self.bias.data());
        let mut cells = vec![T::zero(); steps * batch * h];
        let mut tanh_cells = vec![T::zero(); steps * batch * h];
        let mut hidden = vec![T::zero(); steps * batch * h];
        let step_gates = batch * g4;
        let step_h = batch * h;
        for t in 0..steps {
            let (done_h, rest_h) = hidden.split_at_mut(t * step_h);
            let g = &mut gates[t * step_gates..(t + 1) * step_gates];
            if t > 0 {
                let h_prev = &done_h[(t - 1) * step_h..];
                T::gemm(false, true, batch, g4, h, T::one(), h_prev, self.w_hh.data(), T::one(), g);
            }
            for row in g.chunks_exact_mut(g4) {
                T::sigmoid_in_place(&mut row[..2 * h]);
                T::tanh_in_place(&mut row[2 * h..3 * h]);
                T::sigmoid_in_place(&mut row[3 * h..]);
            }
            let (done_c, rest_c) = cells.split_at_mut(t * step_h);
            let c_now = &mut rest_c[..step_h];
            let c_prev = (t > 0).then(|| &done_c[(t - 1) * step_h..]);
            for (b, (row, c)) in g.chunks_exact(g4).zip(c_now.chunks_exact_mut(h)).enumerate() {
                let (i_g, rest) = row.split_at(h);
                let (f_g, rest) = rest.split_at(h);
                let g_g = &rest[..h];
                match c_prev {
                    Some(prev) => {
                        let prev = &prev[b * h..(b + 1) * h];
                        for ((((c, p), i), f), g) in c.iter_mut().zip(prev).zip(i_g).zip(f_g).zip(g_g) {
                            *c = *f * *p + *i * *g;
                        }
                    }
                    None => {
                        for ((c, i), g) in c.iter_mut().zip(i_g).zip(g_g) {
                            *c = *i * *g;
                        }
                    }
                }
            }
            let tc = &mut tanh_cells[t * step_h..(t + 1) * step_h];
            tc.copy_from_slice(c_now);
            T::tanh_in_place(tc);
            let h_now = &mut rest_h[..step_h];
            for ((row, hv), tv) in g.chunks_exact(g4).zip(h_now.chunks_exact_mut(h)).zip(tc.chunks_exact(h)) {
                for ((hj, o), tj) in hv.iter_mut().zip(&row[3 * h..]).zip(tv) {
                    *hj = *o * *tj;
                }
            }
        }
        Ok(LstmCache { gates, cells, tanh_cells, hidden })
    }

    /// Backpropagation through time. `dh` is the loss gradient with respect
    /// to every hidden output `[steps, batch, hidden]`.
    pub fn backward(&self, dh: &[T], x: &[T], cache: &LstmCache<T>, steps: usize, batch: usize) -> (Vec<T>, Self) {
        let (input, h) = (self.input_size(), self.hidden_size());
        let g4 = 4 * h;
        let step_h = batch * h;
        let step_g = batch * g4;
        let mut dgates = vec![T::zero(); steps * step_g];
        let mut dh_next = vec![T::zero(); step_h];
        let mut dc_next = vec![T::zero(); step_h];
        let one = T::one();
        let zero_state = vec![T::zero(); step_h];
        for t in (0..steps).rev() {
            let gates = &cache.gates[t * step_g..(t + 1) * step_g];
            let tc = &cache.tanh_cells[t * step_h..(t + 1) * step_h];
            let dg_t = &mut dgates[t * step_g..(t + 1) * step_g];
            let c_prev = if t > 0 { &cache.cells[(t - 1) * step_h..t * step_h] } else { &zero_state[..] };
            let dh_t = &dh[t * step_h..(t + 1) * step_h];
            for b in 0..batch {
                let row = &gates[b * g4..(b + 1) * g4];
                let (i_g, rest) = row.split_at(h);
                let (f_g, rest) = rest.split_at(h);
                let (g_g, o_g) = rest.split_at(h);
                let drow = &mut dg_t[b * g4..(b + 1) * g4];
                let (di, rest) = drow.split_at_mut(h);
                let (df, rest) = rest.split_at_mut(h);
                let (dg, d_o) = rest.split_at_mut(h);
                let span = b * h..(b + 1) * h;
                let (tcv, dhv) = (&tc[span.clone()], &dh_t[span.clone()]);
                let (dh_n, dc_n) = (&dh_next[span.clone()], &mut dc_next[span.clone()]);
                let cp = &c_prev[span.clone()];
                for j in 0..h {
                    let (i, f, g, o) = (i_g[j], f_g[j], g_g[j], o_g[j]);
                    let d_h = dhv[j] + dh_n[j];
                    let tcj = tcv[j];
                    let dc = d_h * o * (one - tcj * tcj) + dc_n[j];
                    dc_n[j] = dc * f;
                    di[j] = dc * g * i * (one - i);
                    df[j] = dc * cp[j] * f * (one - f);
                    dg[j] = dc * i * (one - g * g);
                    d_o[j] = d_h * tcj * o * (one - o);
                }
            }
            if t > 0 {
                T::gemm(false, false, batch, h, g4, one, dg_t, self.w_hh.data(), T::zero(), &mut dh_next);
            }
        }
        let mut grad = Self::zeros(input, h);
        let rows = steps * batch;
        T::gemm(true, false, g4, input, rows, one, &dgates, x, T::zero(), grad.w_ih.data_mut());
        if steps > 1 {
            T::gemm(
                true,
                false,
                g4,
                h,
                (steps - 1) * batch,
                one,
                &dgates[step_g..],
                &cache.hidden[..(steps - 1) * step_h],
                T::zero(),
                grad.w_hh.data_mut(),
            );
        }
        column_sums(&dgates, g4, grad.bias.data_mut());
        let mut dx = vec![T::zero(); rows * input];
        T::gemm(false, false, rows, input, g4, one, &dgates, self.w_ih.data(), T::zero(), &mut dx);
        (dx, grad)
    }
}

/// Fully connected layer `y = x W^T + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    /// `[out, in]`.
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> Linear<T> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self { weight: Tensor::zeros(&[output, input]), bias: Tensor::zeros(&[output]) }
    }

    pub fn input_size(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn output_size(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &[T], batch: usize) -> Vec<T> {
        let mut y = vec![T::zero(); batch * self.output_size()];
        T::gemm(false, true, batch, self.output_size(), self.input_size(), T::one(), x, self.weight.data(), T::zero(), &mut y);
        add_row_bias(&mut y, self.bias.data());
        y
    }

    pub fn backward(&self, dy: &[T], x: &[T], batch: usize) -> (Vec<T>, Self) {
        let (i, o) = (self.input_size(), self.output_size());
        let mut grad = Self::zeros(i, o);
        T::gemm(true, false, o, i, batch, T::one(), dy, x, T::zero(), grad.weight.data_mut());
        column_sums(dy, o, grad.bias.data_mut());
        let mut dx = vec![T::zero(); batch * i];
        T::gemm(false, false, batch, i, o, T::one(), dy, self.weight.data(), T::zero(), &mut dx);
        (dx, grad)
    }
}

/// Row-wise log-softmax.
pub fn log_softmax<T: Real>(z: &[T], classes: usize) -> Vec<T> {
    let mut y = z.to_vec();
    for row in y.chunks_exact_mut(classes) {
        let max = row.iter().fold(T::neg_infinity(), |m, v| m.max(*v));
        let lse = max + row.iter().fold(T::zero(), |s, v| s + (*v - max).exp()).ln();
        row.iter_mut().for_each(|v| *v -= lse);
    }
    y
}

pub fn log_softmax_backward<T: Real>(dy: &[T], y: &[T], classes: usize) -> Vec<T> {
    let mut dz = dy.to_vec();
    for (drow, yrow) in dz.chunks_exact_mut(classes).zip(y.chunks_exact(classes)) {
        let total = drow.iter().fold(T::zero(), |s, v| s + *v);
        for (d, yv) in drow.iter_mut().zip(yrow) {
            *d -= yv.exp() * total;
        }
    }
    dz
}

fn check_labels(labels: &[usize], rows: usize, classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::invalid(format!("{} labels for {rows} rows", labels.len())));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::invalid(format!("label {bad} outside 0..{classes}")));
    }
    Ok(())
}

/// Mean negative log-likelihood of the labelled classes.
pub fn nll_loss<T: Real>(log_probs: &[T], labels: &[usize], classes: usize) -> Result<T> {
    let rows = log_probs.len() / classes;
    check_labels(labels, rows, classes)?;
    if rows == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let total = labels.iter().enumerate().fold(T::zero(), |s, (r, &l)| s - log_probs[r * classes + l]);
    Ok(total / T::lit(rows as f64))
}

/// Gradient of [`nll_loss`] with respect to the log-probabilities.
pub fn nll_grad<T: Real>(labels: &[usize], classes: usize) -> Vec<T> {
    let mut g = vec![T::zero(); labels.len() * classes];
    let w = -T::one() / T::lit(labels.len() as f64);
    for (r, &l) in labels.iter().enumerate() {
        g[r * classes + l] = w;
    }
    g
}
