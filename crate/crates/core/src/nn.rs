//! Small fully connected ReLU networks with hand-written backpropagation and
//! Adam, shared by the policy heads and the DQN baseline.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Dense layers; hidden layers use ReLU, the output layer is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    /// `weights[l]` is `sizes[l+1] x sizes[l]`, row-major.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Grads {
    pub fn zeros_like(m: &Mlp) -> Self {
        Grads {
            weights: m.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: m.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.weights.iter_mut().chain(self.biases.iter_mut()).flatten().for_each(|v| *v *= s);
    }

    pub fn flat(&self) -> Vec<f64> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| w.iter().chain(b.iter()).copied()).collect()
    }
}

impl Mlp {
    /// He-style uniform initialization: U(-sqrt(6/fan_in), sqrt(6/fan_in)), zero biases.
    pub fn new<R: Rng>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let a = (6.0 / fan_in as f64).sqrt();
            weights.push((0..fan_in * fan_out).map(|_| rng.gen_range(-a..a)).collect());
            biases.push(vec![0.0; fan_out]);
        }
        Mlp { sizes: sizes.to_vec(), weights, biases }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("non-empty")
    }

    pub fn zero_output_layer(&mut self) {
        let l = self.weights.len() - 1;
        self.weights[l].iter_mut().for_each(|v| *v = 0.0);
        self.biases[l].iter_mut().for_each(|v| *v = 0.0);
    }

    /// Activations of every layer, input first, logits last.
    fn forward_all(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let input = &acts[l];
            let n_in = input.len();
            let mut out: Vec<f64> = b
                .iter()
                .enumerate()
                .map(|(o, bias)| bias + w[o * n_in..(o + 1) * n_in].iter().zip(input).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            if l < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_all(x).pop().expect("output layer")
    }

    /// Accumulates parameter gradients for one sample given dLoss/dLogits.
    /// The loss closure receives the logits and returns the gradient.
    pub fn accumulate<F>(&self, x: &[f64], grads: &mut Grads, dloss: F) -> f64
    where
        F: FnOnce(&[f64]) -> (f64, Vec<f64>),
    {
        let acts = self.forward_all(x);
        let (loss, mut delta) = dloss(acts.last().expect("logits"));
        for l in (0..self.weights.len()).rev() {
            let input = &acts[l];
            let n_in = input.len();
            let w = &self.weights[l];
            for (o, d) in delta.iter().enumerate() {
                grads.biases[l][o] += d;
                let row = &mut grads.weights[l][o * n_in..(o + 1) * n_in];
                for (g, a) in row.iter_mut().zip(input) {
                    *g += d * a;
                }
            }
            if l > 0 {
                let mut prev = vec![0.0; n_in];
                for (o, d) in delta.iter().enumerate() {
                    for (p, wv) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *p += d * wv;
                    }
                }
                // ReLU derivative; `input` is the post-activation of layer l.
                for (p, a) in prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        loss
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| w.iter().chain(b.iter()).copied()).collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params());
        let mut it = flat.iter();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            w.iter_mut().chain(b.iter_mut()).for_each(|v| *v = *it.next().expect("length checked"));
        }
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Categorical cross-entropy on logits; returns (loss, dLoss/dLogits).
pub fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let mut p = softmax(logits);
    let loss = -p[label].max(1e-300).ln();
    p[label] -= 1.0;
    (loss, p)
}

/// Squared error on one output; returns (loss, dLoss/dOutputs).
pub fn squared_error_at(outputs: &[f64], index: usize, target: f64) -> (f64, Vec<f64>) {
    let mut g = vec![0.0; outputs.len()];
    let d = outputs[index] - target;
    g[index] = d;
    (0.5 * d * d, g)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, n_params: usize) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: vec![0.0; n_params], v: vec![0.0; n_params] }
    }

    pub fn apply(&mut self, net: &mut Mlp, grads: &Grads) {
        self.step += 1;
        let b1t = 1.0 - self.beta1.powi(self.step as i32);
        let b2t = 1.0 - self.beta2.powi(self.step as i32);
        let mut i = 0;
        let layers = net.weights.iter_mut().zip(net.biases.iter_mut());
        let glayers = grads.weights.iter().zip(&grads.biases);
        for ((w, b), (gw, gb)) in layers.zip(glayers) {
            for (p, g) in w.iter_mut().chain(b.iter_mut()).zip(gw.iter().chain(gb.iter())) {
                self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
                self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
                let mh = self.m[i] / b1t;
                let vh = self.v[i] / b2t;
                *p -= self.lr * mh / (vh.sqrt() + self.eps);
                i += 1;
            }
        }
    }
}

/// Mini-batch training with cross-entropy. Sample order is reshuffled every
/// epoch from `rng`. Returns the mean loss of the final epoch.
pub fn train_classifier<R: Rng>(
    net: &mut Mlp,
    opt: &mut Adam,
    data: &[(&[f64], usize)],
    epochs: usize,
    batch: usize,
    rng: &mut R,
) -> f64 {
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut last = 0.0;
    for _ in 0..epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch.max(1)) {
            let mut g = Grads::zeros_like(net);
            for &i in chunk {
                let (x, y) = data[i];
                total += net.accumulate(x, &mut g, |z| cross_entropy(z, y));
            }
            g.scale(1.0 / chunk.len() as f64);
            opt.apply(net, &g);
        }
        last = total / data.len().max(1) as f64;
    }
    last
}
