mod common;

use common::gradcheck::{self, randn, randomized, small_spec, FD_TOL};
use knitpad::nn::layers::*;
use knitpad::nn::*;
use knitpad::seed;
use proptest::prelude::*;
use rand::Rng;

fn assert_below_tol(report: gradcheck::Report) {
    for (what, e) in report {
        assert!(e < FD_TOL, "{what}: rel {e}");
    }
}

#[test]
fn conv1d_gradients() {
    assert_below_tol(gradcheck::conv1d());
}

#[test]
fn batch_norm_gradients() {
    assert_below_tol(gradcheck::batch_norm());
}

#[test]
fn max_pool_gradients() {
    assert_below_tol(gradcheck::max_pool());
}

#[test]
fn lstm_gradients() {
    assert_below_tol(gradcheck::lstm());
}

#[test]
fn linear_gradients() {
    assert_below_tol(gradcheck::linear());
}

#[test]
fn log_softmax_nll_gradients() {
    assert_below_tol(gradcheck::log_softmax_nll());
}

#[test]
fn nll_matches_scalar_recomputation() {
    let classes = 12;
    let z = randn(9 * classes, 21);
    let y = log_softmax(&z, classes);
    let labels: Vec<usize> = (0..9).map(|i| (i * 5) % classes).collect();
    let mut expected = 0.0;
    for (r, &l) in labels.iter().enumerate() {
        let row = &z[r * classes..(r + 1) * classes];
        let denom: f64 = row.iter().map(|v| v.exp()).sum();
        expected += -(row[l].exp() / denom).ln();
    }
    expected /= 9.0;
    assert!((nll_loss(&y, &labels, classes).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn whole_model_gradients() {
    for variant in [Variant::CnnLstm, Variant::LstmOnly] {
        let report = gradcheck::model(variant);
        assert!(report.len() >= 4);
        assert_below_tol(report);
    }
}

#[test]
fn confident_correct_model_has_vanishing_gradients() {
    let spec = small_spec(Variant::CnnLstm);
    let mut params = randomized(&spec, 24);
    params.head.weight = Tensor::zeros(&[4, 3]);
    params.head.bias = Tensor::from_vec(&[4], vec![0.0, 40.0, 0.0, 0.0]).unwrap();
    let x = Tensor::from_vec(&[4, 6, 2], randn(48, 25)).unwrap();
    let (loss, grads) = params.loss_and_grads(&x, &[1, 1, 1, 1], 3).unwrap();
    assert!(loss < 1e-15);
    for e in grads.entries() {
        assert!(e.tensor.sum_squares().sqrt() < 1e-6, "{}", e.name);
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Step-by-step scalar evaluation of the network in eval mode, written
/// directly from the layer definitions with no shared code.
fn scalar_forward(p: &ModelParams<f64>, x: &[Vec<f64>]) -> Vec<f64> {
    let spec = &p.spec;
    let mut seq: Vec<Vec<f64>> = x.to_vec();
    if let Some(cnn) = &p.cnn {
        let conv = |input: &[Vec<f64>], c: &Conv1d<f64>| -> Vec<Vec<f64>> {
            let (cout, k, cin) = (c.out_channels(), c.kernel(), c.in_channels());
            let pad = c.padding as isize;
            (0..input.len())
                .map(|t| {
                    (0..cout)
                        .map(|o| {
                            let mut s = c.bias.data()[o];
                            for kk in 0..k {
                                let src = t as isize + kk as isize - pad;
                                if src < 0 || src >= input.len() as isize {
                                    continue;
                                }
                                for i in 0..cin {
                                    s += c.weight.data()[(o * k + kk) * cin + i] * input[src as usize][i];
                                }
                            }
                            s.max(0.0)
                        })
                        .collect()
                })
                .collect()
        };
        let a1 = conv(&seq, &cnn.conv1);
        let bn = &cnn.bn1;
        let normed: Vec<Vec<f64>> = a1
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(j, v)| {
                        (v - bn.running_mean.data()[j]) / (bn.running_var.data()[j] + BATCH_NORM_EPS).sqrt()
                            * bn.gamma.data()[j]
                            + bn.beta.data()[j]
                    })
                    .collect()
            })
            .collect();
        let a2 = conv(&normed, &cnn.conv2);
        seq = (0..a2.len() / 2)
            .map(|t| a2[2 * t].iter().zip(&a2[2 * t + 1]).map(|(a, b)| a.max(*b)).collect())
            .collect();
    }
    let hsz = spec.hidden;
    for layer in &p.lstm {
        let inp = layer.input_size();
        let (mut h, mut c) = (vec![0.0; hsz], vec![0.0; hsz]);
        let mut out = Vec::new();
        for xt in &seq {
            let gate = |g: usize, j: usize| {
                let r = g * hsz + j;
                let mut s = layer.bias.data()[r];
                for i in 0..inp {
                    s += layer.w_ih.data()[r * inp + i] * xt[i];
                }
                for i in 0..hsz {
                    s += layer.w_hh.data()[r * hsz + i] * h[i];
                }
                s
            };
            let mut nh = vec![0.0; hsz];
            for j in 0..hsz {
                let (ig, fg, gg, og) = (sigmoid(gate(0, j)), sigmoid(gate(1, j)), gate(2, j).tanh(), sigmoid(gate(3, j)));
                c[j] = fg * c[j] + ig * gg;
                nh[j] = og * c[j].tanh();
            }
            h = nh;
            out.push(h.clone());
        }
        seq = out;
    }
    let last = seq.last().unwrap();
    let logits: Vec<f64> = (0..spec.classes)
        .map(|o| p.head.bias.data()[o] + (0..hsz).map(|i| p.head.weight.data()[o * hsz + i] * last[i]).sum::<f64>())
        .collect();
    let norm = logits.iter().map(|v| v.exp()).sum::<f64>().ln();
    logits.iter().map(|v| v - norm).collect()
}

#[test]
fn hand_sized_network_matches_scalar_oracle() {
    for variant in [Variant::CnnLstm, Variant::LstmOnly] {
        let spec = ModelSpec { seq_len: 4, ..small_spec(variant) };
        let params = randomized(&spec, 26);
        let batch = 3;
        let flat = randn(batch * 4 * 2, 27);
        let out = params.forward(&Tensor::from_vec(&[batch, 4, 2], flat.clone()).unwrap(), Mode::Eval).unwrap();
        for b in 0..batch {
            let x: Vec<Vec<f64>> = (0..4).map(|t| flat[(b * 4 + t) * 2..][..2].to_vec()).collect();
            let expected = scalar_forward(&params, &x);
            for (k, e) in expected.iter().enumerate() {
                let got = out.data()[b * spec.classes + k];
                assert!((got - e).abs() < 1e-12, "{variant:?} b={b} k={k}: {got} vs {e}");
            }
        }
    }
}

#[test]
fn default_cnn_pools_to_half_length() {
    let params = ModelParams::<f32>::init(&ModelSpec::default(), 1).unwrap();
    let x = Tensor::from_vec(&[2, 250, 4], randn(2000, 28).iter().map(|&v| v as f32).collect()).unwrap();
    let cache = params.forward_cached(&x, Mode::Eval).unwrap();
    assert_eq!(cache.steps, 125);
    let lstm = ModelParams::<f32>::init(&ModelSpec::lstm_only(), 1).unwrap();
    assert_eq!(lstm.forward_cached(&x, Mode::Eval).unwrap().steps, 250);
}

#[test]
fn dropout_expectation_matches_eval() {
    let x = randn(64, 29);
    let trials = 4000;
    let p = 0.6;
    let mut mean = vec![0.0; x.len()];
    for s in 0..trials {
        let mask: Vec<f64> = dropout_mask(x.len(), p, s);
        mean.iter_mut().zip(&mask).zip(&x).for_each(|((m, k), v)| *m += k * v / trials as f64);
    }
    // Per-entry standard error of the mask mean is sqrt(p / (1 - p) / trials).
    let se = (p / (1.0 - p) / trials as f64).sqrt();
    for (m, v) in mean.iter().zip(&x) {
        assert!((m - v).abs() <= 4.5 * se * v.abs() + 1e-12, "{m} vs {v}");
    }
}

#[test]
fn save_load_forward_is_bit_identical() {
    let params = ModelParams::<f32>::init(&ModelSpec::default(), 30).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.knp");
    params.save(&path).unwrap();
    let loaded = ModelParams::<f32>::load(&path).unwrap();
    let x = Tensor::from_vec(&[3, 250, 4], randn(3000, 31).iter().map(|&v| v as f32).collect()).unwrap();
    let a = params.forward(&x, Mode::Eval).unwrap();
    let b = loaded.forward(&x, Mode::Eval).unwrap();
    assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
}

/// Three classes told apart by which channel carries a bump.
fn toy_examples(n_per_class: usize, s: u64) -> Examples<f32> {
    let (len, ch) = (24, 4);
    let mut rng = seed::rng(s);
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for class in 0..3 {
        for _ in 0..n_per_class {
            let centre = rng.random_range(6.0..18.0);
            for t in 0..len {
                for c in 0..ch {
                    let bump = if c == class { (-((t as f64 - centre) / 3.0).powi(2)).exp() } else { 0.0 };
                    inputs.push((bump + 0.05 * rng.random_range(-1.0..1.0)) as f32);
                }
            }
            labels.push(class);
        }
    }
    Examples::new(inputs, labels, len, ch).unwrap()
}

fn toy_spec() -> ModelSpec {
    ModelSpec {
        variant: Variant::CnnLstm,
        input_channels: 4,
        seq_len: 24,
        conv1: ConvSpec { in_channels: 4, out_channels: 8, kernel: 5, padding: 2 },
        dropout: 0.6,
        conv2: ConvSpec { in_channels: 8, out_channels: 8, kernel: 3, padding: 1 },
        pool: PoolSpec { kernel: 2, stride: 2 },
        lstm_layers: 2,
        hidden: 16,
        classes: 3,
    }
}

#[test]
fn toy_problem_trains_to_full_accuracy() {
    let data = toy_examples(20, 32);
    let config = TrainConfig { epochs: 50, batch_size: 16, seed: 7, ..TrainConfig::default() };
    let out = train(&data, Some(&data), &toy_spec(), &config).unwrap();
    let best = out.history.iter().filter_map(|r| r.validation_accuracy).fold(0.0, f64::max);
    assert_eq!(best, 1.0, "{:?}", out.history.last());
    let losses: Vec<f64> = out.history.iter().map(|r| r.validation_loss.unwrap()).collect();
    let smooth: Vec<f64> = losses.windows(10).map(|w| w.iter().sum::<f64>() / 10.0).collect();
    for w in smooth.windows(2) {
        assert!(w[1] <= w[0] + 1e-9, "{smooth:?}");
    }
    let again = train(&data, Some(&data), &toy_spec(), &config).unwrap();
    assert_eq!(again.params, out.params);
    assert_eq!(again.history, out.history);
}

#[test]
fn training_rejects_bad_inputs() {
    let data = toy_examples(2, 33);
    let empty = Examples::<f32>::new(vec![], vec![], 24, 4).unwrap();
    assert!(train(&empty, None, &toy_spec(), &TrainConfig::default()).is_err());
    let bad = TrainConfig { dropout: 1.0, ..TrainConfig::default() };
    assert!(train(&data, None, &toy_spec(), &bad).is_err());
    assert!(train(&data, None, &ModelSpec::default(), &TrainConfig::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn eval_rows_are_distributions(values in prop::collection::vec(-5.0f32..5.0, 2 * 250 * 4), s in 0u64..1000) {
        let params = ModelParams::<f32>::init(&ModelSpec::default(), s).unwrap();
        let mut data = values.clone();
        data.extend_from_slice(&values[..250 * 4]);
        let out = params.forward(&Tensor::from_vec(&[3, 250, 4], data).unwrap(), Mode::Eval).unwrap();
        for row in out.data().chunks(12) {
            let total: f64 = row.iter().map(|v| (*v as f64).exp()).sum();
            prop_assert!((total - 1.0).abs() < 1e-6);
        }
        prop_assert_eq!(&out.data()[..12], &out.data()[24..36]);
    }
}
