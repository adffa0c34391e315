//! Finite-difference gradient verification.
//!
//! [`numeric_gradient`] only ever calls the function being differentiated,
//! never a backward pass, so it is an independent reference;
//! [`check_layer`] holds each layer's backward pass up against it.

use super::{
    cross_entropy, dropout, dropout_backward, softmax, softmax_cross_entropy_grad, Activation, Conv2d, Dense,
    Embedding, Lstm, LstmCell, Mode, Param, Rng, Tensor,
};

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` for every `i`.
pub fn numeric_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let plus = f(&probe);
            probe[i] = orig - h;
            let minus = f(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / (‖a‖ + ‖b‖)`, zero when both vectors vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = norm(analytic) + norm(numeric);
    if denom == 0.0 {
        0.0
    } else {
        diff / denom
    }
}

const H: f64 = 1e-5;

/// Largest relative error seen by a group of checks.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCheck {
    pub layer: &'static str,
    pub trials: usize,
    pub max_error: f64,
    /// Which gradient and trial produced `max_error`.
    pub worst: String,
}

#[derive(Default)]
struct Worst {
    max: f64,
    at: String,
}

impl Worst {
    fn record(&mut self, what: &str, trial: usize, analytic: &[f64], numeric: &[f64]) {
        let err = relative_error(analytic, numeric);
        // NaN must not pass as small
        if err.is_nan() || err > self.max || self.at.is_empty() {
            self.max = if err.is_nan() { f64::INFINITY } else { err.max(self.max) };
            self.at = format!("{what} (trial {trial})");
        }
    }
}

/// Layers covered by [`check_layer`].
pub const LAYERS: [&str; 11] = [
    "dense-identity",
    "dense-tanh",
    "dense-sigmoid",
    "dense-relu",
    "conv2d",
    "lstm-cell",
    "lstm-sequence",
    "embedding",
    "softmax-cross-entropy",
    "activations",
    "dropout",
];

/// Randomized finite-difference checks of one layer's backward pass in
/// `f64`: input and parameter gradients against central differences.
/// Returns `None` for an unknown layer name.
pub fn check_layer(layer: &str, trials: usize) -> Option<LayerCheck> {
    let mut w = Worst::default();
    let name = *LAYERS.iter().find(|l| **l == layer)?;
    match name {
        "dense-identity" => dense_trials(Activation::Identity, 1, trials, &mut w),
        "dense-tanh" => dense_trials(Activation::Tanh, 2, trials, &mut w),
        "dense-sigmoid" => dense_trials(Activation::Sigmoid, 3, trials, &mut w),
        "dense-relu" => dense_trials(Activation::Relu, 4, trials, &mut w),
        "conv2d" => conv2d(trials, &mut w),
        "lstm-cell" => lstm_cell_step(trials, &mut w),
        "lstm-sequence" => lstm_sequence(trials, &mut w),
        "embedding" => embedding(trials, &mut w),
        "softmax-cross-entropy" => softmax_cross_entropy(trials, &mut w),
        "activations" => standalone_activations(trials, &mut w),
        _ => dropout_fixed_mask(trials, &mut w),
    }
    Some(LayerCheck {
        layer: name,
        trials,
        max_error: w.max,
        worst: w.at,
    })
}

fn rand_vec(rng: &mut Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(-scale, scale)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}


fn randomize(p: &mut Param<f64>, rng: &mut Rng, scale: f64) {
    for v in p.value.data_mut() {
        *v = rng.uniform(-scale, scale);
    }
}

fn set(p: &mut Param<f64>, values: &[f64]) {
    p.value.data_mut().copy_from_slice(values);
}

fn dense_trials(act: Activation, seed: u64, trials: usize, worst: &mut Worst) {
    let mut rng = Rng::seed(seed);
    for trial in 0..trials {
        let (batch, n_in, n_out) = (1 + rng.below(3), 1 + rng.below(5), 1 + rng.below(4));
        let mut layer = Dense::<f64>::new(n_in, n_out, act, &mut rng);
        randomize(&mut layer.bias, &mut rng, 0.5);
        let mut x = rand_vec(&mut rng, batch * n_in, 1.0);
        if act == Activation::Relu {
            // keep every pre-activation away from the kink
            loop {
                let probe = Dense { activation: Activation::Identity, ..layer.clone() };
                let (z, _) = probe.forward(&Tensor::from_vec(&[batch, n_in], x.clone()).unwrap()).unwrap();
                if z.data().iter().all(|v| v.abs() > 1e-3) {
                    break;
                }
                x = rand_vec(&mut rng, batch * n_in, 1.0);
            }
        }
        let up = rand_vec(&mut rng, batch * n_out, 1.0);
        let loss = |l: &Dense<f64>, xv: &[f64]| {
            let (y, _) = l.forward(&Tensor::from_vec(&[batch, n_in], xv.to_vec()).unwrap()).unwrap();
            dot(y.data(), &up)
        };

        let mut analytic = layer.clone();
        let xt = Tensor::from_vec(&[batch, n_in], x.clone()).unwrap();
        let (_, cache) = analytic.forward(&xt).unwrap();
        let dx = analytic
            .backward(&cache, &Tensor::from_vec(&[batch, n_out], up.clone()).unwrap())
            .unwrap();

        worst.record("dense dx", trial, dx.data(), &numeric_gradient(|v| loss(&layer, v), &x, H));
        let w0 = layer.weight.value.data().to_vec();
        let num_w = numeric_gradient(
            |w| {
                let mut l = layer.clone();
                set(&mut l.weight, w);
                loss(&l, &x)
            },
            &w0,
            H,
        );
        worst.record("dense dW", trial, analytic.weight.grad.data(), &num_w);
        let b0 = layer.bias.value.data().to_vec();
        let num_b = numeric_gradient(
            |b| {
                let mut l = layer.clone();
                set(&mut l.bias, b);
                loss(&l, &x)
            },
            &b0,
            H,
        );
        worst.record("dense db", trial, analytic.bias.grad.data(), &num_b);
    }
}

fn conv2d(trials: usize, worst: &mut Worst) {
    let mut rng = Rng::seed(5);
    for trial in 0..trials {
        let ic = 1 + rng.below(2);
        let oc = 1 + rng.below(3);
        let k = [1, 3][rng.below(2)];
        let stride = 1 + rng.below(2);
        let padding = rng.below(2);
        let (h, w) = (k + rng.below(4), k + rng.below(4));
        let mut conv = Conv2d::<f64>::new(ic, oc, k, stride, padding, &mut rng);
        randomize(&mut conv.bias, &mut rng, 0.5);
        let x = rand_vec(&mut rng, ic * h * w, 1.0);
        let (oh, ow) = conv.output_size(h, w);
        let up = rand_vec(&mut rng, oc * oh * ow, 1.0);
        let loss = |c: &Conv2d<f64>, xv: &[f64]| {
            let (y, _) = c.forward(&Tensor::from_vec(&[ic, h, w], xv.to_vec()).unwrap()).unwrap();
            dot(y.data(), &up)
        };

        let mut analytic = conv.clone();
        let (_, cache) = analytic
            .forward(&Tensor::from_vec(&[ic, h, w], x.clone()).unwrap())
            .unwrap();
        let dx = analytic
            .backward(&cache, &Tensor::from_vec(&[oc, oh, ow], up.clone()).unwrap())
            .unwrap();
        worst.record("conv dx", trial, dx.data(), &numeric_gradient(|v| loss(&conv, v), &x, H));
        let w0 = conv.weight.value.data().to_vec();
        let num_w = numeric_gradient(
            |wv| {
                let mut c = conv.clone();
                set(&mut c.weight, wv);
                loss(&c, &x)
            },
            &w0,
            H,
        );
        worst.record("conv dW", trial, analytic.weight.grad.data(), &num_w);
        let b0 = conv.bias.value.data().to_vec();
        let num_b = numeric_gradient(
            |bv| {
                let mut c = conv.clone();
                set(&mut c.bias, bv);
                loss(&c, &x)
            },
            &b0,
            H,
        );
        worst.record("conv db", trial, analytic.bias.grad.data(), &num_b);
    }
}

fn cell_param(cell: &mut LstmCell<f64>, which: usize) -> &mut Param<f64> {
    match which {
        0 => &mut cell.w_ih,
        1 => &mut cell.w_hh,
        _ => &mut cell.bias,
    }
}

fn lstm_cell_step(trials: usize, worst: &mut Worst) {
    let mut rng = Rng::seed(6);
    for trial in 0..trials {
        let (n_in, hd) = (1 + rng.below(4), 1 + rng.below(4));
        let mut cell = LstmCell::<f64>::new(n_in, hd, &mut rng);
        randomize(&mut cell.bias, &mut rng, 1.0);
        let x = rand_vec(&mut rng, n_in, 1.0);
        let h = rand_vec(&mut rng, hd, 1.0);
        let c = rand_vec(&mut rng, hd, 1.0);
        let uh = rand_vec(&mut rng, hd, 1.0);
        let uc = rand_vec(&mut rng, hd, 1.0);
        let loss = |cl: &LstmCell<f64>, x: &[f64], h: &[f64], c: &[f64]| {
            let (h2, c2, _) = cl.step(x, h, c).unwrap();
            dot(&h2, &uh) + dot(&c2, &uc)
        };

        let mut analytic = cell.clone();
        let (_, _, cache) = analytic.step(&x, &h, &c).unwrap();
        let (dx, dh, dc) = analytic.backward_step(&cache, &uh, &uc).unwrap();
        worst.record("lstm dx", trial, &dx, &numeric_gradient(|v| loss(&cell, v, &h, &c), &x, H));
        worst.record("lstm dh", trial, &dh, &numeric_gradient(|v| loss(&cell, &x, v, &c), &h, H));
        worst.record("lstm dc", trial, &dc, &numeric_gradient(|v| loss(&cell, &x, &h, v), &c, H));
        for (name, get) in [
            ("lstm dW_ih", 0usize),
            ("lstm dW_hh", 1),
            ("lstm db", 2),
        ] {
            let p0 = cell_param(&mut cell.clone(), get).value.data().to_vec();
            let num = numeric_gradient(
                |v| {
                    let mut cl = cell.clone();
                    set(cell_param(&mut cl, get), v);
                    loss(&cl, &x, &h, &c)
                },
                &p0,
                H,
            );
            let grad = cell_param(&mut analytic.clone(), get).grad.data().to_vec();
            worst.record(name, trial, &grad, &num);
        }
    }
}

fn lstm_sequence(trials: usize, worst: &mut Worst) {
    let mut rng = Rng::seed(7);
    for trial in 0..trials {
        let (steps, n_in, hd) = (1 + rng.below(4), 1 + rng.below(3), 1 + rng.below(3));
        let lstm = Lstm::<f64>::new(n_in, hd, &mut rng);
        let xs = rand_vec(&mut rng, steps * n_in, 1.0);
        let uh = rand_vec(&mut rng, steps * hd, 1.0);
        let uc = rand_vec(&mut rng, hd, 1.0);
        let loss = |l: &Lstm<f64>, xv: &[f64]| {
            let (out, _) = l
                .forward(&Tensor::from_vec(&[steps, n_in], xv.to_vec()).unwrap())
                .unwrap();
            dot(out.hidden.data(), &uh) + dot(&out.final_c, &uc)
        };
        let mut analytic = lstm.clone();
        let (_, cache) = analytic
            .forward(&Tensor::from_vec(&[steps, n_in], xs.clone()).unwrap())
            .unwrap();
        let dxs = analytic
            .backward(&cache, &Tensor::from_vec(&[steps, hd], uh.clone()).unwrap(), &uc)
            .unwrap();
        worst.record("lstm seq dx", trial, dxs.data(), &numeric_gradient(|v| loss(&lstm, v), &xs, H));
        let w0 = lstm.cell.w_hh.value.data().to_vec();
        let num = numeric_gradient(
            |v| {
                let mut l = lstm.clone();
                set(&mut l.cell.w_hh, v);
                loss(&l, &xs)
            },
            &w0,
            H,
        );
        worst.record("lstm seq dW_hh", trial, analytic.cell.w_hh.grad.data(), &num);
    }
}

fn embedding(trials: usize, worst: &mut Worst) {
    let mut rng = Rng::seed(8);
    for trial in 0..trials {
        let (vocab, dim, len) = (2 + rng.below(5), 1 + rng.below(4), 1 + rng.below(5));
        let emb = Embedding::<f64>::new(vocab, dim, &mut rng);
        let tokens: Vec<usize> = (0..len).map(|_| rng.below(vocab)).collect();
        let up = rand_vec(&mut rng, len * dim, 1.0);
        let mut analytic = emb.clone();
        analytic
            .backward(&tokens, &Tensor::from_vec(&[len, dim], up.clone()).unwrap())
            .unwrap();
        let t0 = emb.table.value.data().to_vec();
        let num = numeric_gradient(
            |v| {
                let mut e = emb.clone();
                set(&mut e.table, v);
                dot(e.forward(&tokens).unwrap().data(), &up)
            },
            &t0,
            H,
        );
        worst.record("embedding", trial, analytic.table.grad.data(), &num);
    }
}

fn softmax_cross_entropy(trials: usize, worst: &mut Worst) {
    let mut rng = Rng::seed(9);
    for trial in 0..trials {
        let k = 2 + rng.below(8);
        let z = rand_vec(&mut rng, k, 5.0);
        let target = rng.below(k);
        let grad = softmax_cross_entropy_grad(&softmax(&z), target);
        let num = numeric_gradient(|v| cross_entropy(&softmax(v), target), &z, H);
        worst.record("softmax-ce", trial, &grad, &num);
    }
}

fn standalone_activations(trials: usize, worst: &mut Worst) {
    let mut rng = Rng::seed(10);
    for act in [Activation::Relu, Activation::Tanh, Activation::Sigmoid, Activation::Identity] {
        for trial in 0..trials {
            let n = 1 + rng.below(10);
            let x: Vec<f64> = (0..n)
                .map(|_| {
                    let v = rng.uniform(0.01, 3.0);
                    if rng.bernoulli(0.5) { v } else { -v }
                })
                .collect();
            let up = rand_vec(&mut rng, n, 1.0);
            let y = act.forward(&Tensor::vector(x.clone()));
            let g = act.backward(&y, &Tensor::vector(up.clone()));
            let num = numeric_gradient(|v| dot(act.forward(&Tensor::vector(v.to_vec())).data(), &up), &x, H);
            worst.record("activation", trial, g.data(), &num);
        }
    }
}

fn dropout_fixed_mask(trials: usize, worst: &mut Worst) {
    let mut rng = Rng::seed(11);
    for trial in 0..trials {
        let n = 1 + rng.below(20);
        let x = rand_vec(&mut rng, n, 1.0);
        let up = rand_vec(&mut rng, n, 1.0);
        let seed = rng.next_u64();
        let f = |v: &[f64]| {
            let mut r = Rng::seed(seed);
            let (y, _) = dropout(&Tensor::vector(v.to_vec()), 0.5, Mode::Train, &mut r).unwrap();
            dot(y.data(), &up)
        };
        let mut r = Rng::seed(seed);
        let (_, mask) = dropout(&Tensor::vector(x.clone()), 0.5, Mode::Train, &mut r).unwrap();
        let g = dropout_backward(&Tensor::vector(up.clone()), &mask);
        worst.record("dropout", trial, g.data(), &numeric_gradient(f, &x, H));
    }
}
