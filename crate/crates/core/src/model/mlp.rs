//! Single-hidden-layer perceptron: logistic hidden units, softmax output,
//! cross-entropy loss, per-sample SGD.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden: 10,
            learning_rate: 0.01,
            epochs: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    n_in: usize,
    hidden: usize,
    n_out: usize,
    /// hidden x n_in, row-major
    w1: Vec<f64>,
    b1: Vec<f64>,
    /// n_out x hidden, row-major
    w2: Vec<f64>,
    b2: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

struct Activations {
    h: Vec<f64>,
    p: Vec<f64>,
}

impl Mlp {
    /// Weights and biases drawn uniformly from [-0.5, 0.5).
    pub fn init<R: Rng>(n_in: usize, hidden: usize, n_out: usize, rng: &mut R) -> Mlp {
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect() };
        Mlp {
            n_in,
            hidden,
            n_out,
            w1: draw(hidden * n_in),
            b1: draw(hidden),
            w2: draw(n_out * hidden),
            b2: draw(n_out),
        }
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Flat parameter vector: w1, b1, w2, b2.
    pub fn params(&self) -> Vec<f64> {
        [&self.w1[..], &self.b1, &self.w2, &self.b2].concat()
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params());
        let (a, rest) = flat.split_at(self.w1.len());
        let (b, rest) = rest.split_at(self.b1.len());
        let (c, d) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(a);
        self.b1.copy_from_slice(b);
        self.w2.copy_from_slice(c);
        self.b2.copy_from_slice(d);
    }

    fn forward(&self, x: &[f64]) -> Activations {
        let h: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let row = &self.w1[j * self.n_in..(j + 1) * self.n_in];
                sigmoid(self.b1[j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            })
            .collect();
        let z: Vec<f64> = (0..self.n_out)
            .map(|k| {
                let row = &self.w2[k * self.hidden..(k + 1) * self.hidden];
                self.b2[k] + row.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect();
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
        let s: f64 = e.iter().sum();
        Activations {
            h,
            p: e.into_iter().map(|v| v / s).collect(),
        }
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).p
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let p = self.probabilities(x);
        let mut best = 0;
        for (k, &v) in p.iter().enumerate() {
            if v > p[best] {
                best = k;
            }
        }
        best
    }

    fn sample_loss(a: &Activations, y: usize) -> f64 {
        -a.p[y].max(f64::MIN_POSITIVE).ln()
    }

    /// Mean cross-entropy over a batch.
    pub fn loss(&self, xs: &[Vec<f64>], ys: &[usize]) -> f64 {
        xs.iter()
            .zip(ys)
            .map(|(x, &y)| Self::sample_loss(&self.forward(x), y))
            .sum::<f64>()
            / xs.len() as f64
    }

    /// Accumulates the gradient of one sample's loss into `g` (flat layout of
    /// [`Mlp::params`]), scaled by `scale`. Returns the sample loss.
    fn backprop(&self, x: &[f64], y: usize, scale: f64, g: &mut [f64]) -> f64 {
        let a = self.forward(x);
        let (g_w1, rest) = g.split_at_mut(self.w1.len());
        let (g_b1, rest) = rest.split_at_mut(self.b1.len());
        let (g_w2, g_b2) = rest.split_at_mut(self.w2.len());
        // softmax + cross-entropy: dL/dz = p - onehot(y)
        let dz: Vec<f64> = (0..self.n_out)
            .map(|k| a.p[k] - if k == y { 1.0 } else { 0.0 })
            .collect();
        let mut dh = vec![0.0; self.hidden];
        for k in 0..self.n_out {
            g_b2[k] += scale * dz[k];
            for j in 0..self.hidden {
                g_w2[k * self.hidden + j] += scale * dz[k] * a.h[j];
                dh[j] += dz[k] * self.w2[k * self.hidden + j];
            }
        }
        for j in 0..self.hidden {
            let da = dh[j] * a.h[j] * (1.0 - a.h[j]);
            g_b1[j] += scale * da;
            for i in 0..self.n_in {
                g_w1[j * self.n_in + i] += scale * da * x[i];
            }
        }
        Self::sample_loss(&a, y)
    }

    /// Gradient of [`Mlp::loss`] with respect to [`Mlp::params`].
    pub fn gradient(&self, xs: &[Vec<f64>], ys: &[usize]) -> Vec<f64> {
        let mut g = vec![0.0; self.n_params()];
        let scale = 1.0 / xs.len() as f64;
        for (x, &y) in xs.iter().zip(ys) {
            self.backprop(x, y, scale, &mut g);
        }
        g
    }

    fn sgd_step(&mut self, x: &[f64], y: usize, lr: f64, g: &mut Vec<f64>) -> f64 {
        g.iter_mut().for_each(|v| *v = 0.0);
        let loss = self.backprop(x, y, 1.0, g);
        let mut offset = 0;
        for block in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            for (w, d) in block.iter_mut().zip(&g[offset..]) {
                *w -= lr * d;
            }
            offset += block.len();
        }
        loss
    }

    /// Initialisation uses stream 0 of `seed`; the per-epoch shuffles use
    /// stream 1.
    pub fn fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, params: &MlpParams, seed: u64) -> Result<Mlp> {
        if params.hidden == 0 {
            return Err(Error::InvalidParameter("hidden size must be at least 1".into()));
        }
        if !(params.learning_rate > 0.0) {
            return Err(Error::InvalidParameter("learning rate must be positive".into()));
        }
        let n_in = x.first().map_or(0, Vec::len);
        let mut net = Mlp::init(n_in, params.hidden, n_classes, &mut seed::rng_stream(seed, 0));
        let mut order: Vec<usize> = (0..x.len()).collect();
        let mut rng = seed::rng_stream(seed, 1);
        let mut g = vec![0.0; net.n_params()];
        for epoch in 0..params.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for &i in &order {
                total += net.sgd_step(&x[i], y[i], params.learning_rate, &mut g);
            }
            if !total.is_finite() || net.params().iter().any(|w| !w.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch });
            }
        }
        Ok(net)
    }
}
