//! Linear SVM trained with stochastic subgradient descent on the regularised
//! hinge loss (Pegasos step size `1 / (lambda * t)`), one-vs-rest for more
//! than two classes.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub lambda: f64,
    pub epochs: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            lambda: 1e-3,
            epochs: 100,
        }
    }
}

/// Score with the bias stored as the last weight.
pub fn margin(w: &[f64], x: &[f64]) -> f64 {
    let (bias, rest) = w.split_last().expect("non-empty weights");
    rest.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + bias
}

/// `lambda / 2 * |w|^2 + mean(max(0, 1 - y * <w, x>))`, with `y` in {-1, +1}.
pub fn objective(w: &[f64], x: &[Vec<f64>], y: &[f64], lambda: f64) -> f64 {
    let reg = 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>();
    let hinge = x
        .iter()
        .zip(y)
        .map(|(xi, &yi)| (1.0 - yi * margin(w, xi)).max(0.0))
        .sum::<f64>()
        / x.len() as f64;
    reg + hinge
}

/// One binary problem. The bias is an augmented constant input and is
/// regularised with the rest of the weights.
pub fn pegasos<R: rand::Rng>(x: &[Vec<f64>], y: &[f64], params: &SvmParams, rng: &mut R) -> Vec<f64> {
    let dim = x.first().map_or(0, Vec::len);
    let mut w = vec![0.0; dim + 1];
    let radius = 1.0 / params.lambda.sqrt();
    let mut order: Vec<usize> = (0..x.len()).collect();
    let mut t: u64 = 0;
    for _ in 0..params.epochs {
        order.shuffle(rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (params.lambda * t as f64);
            let active = y[i] * margin(&w, &x[i]) < 1.0;
            let shrink = 1.0 - eta * params.lambda;
            w.iter_mut().for_each(|v| *v *= shrink);
            if active {
                for (wj, xj) in w.iter_mut().zip(x[i].iter().chain(std::iter::once(&1.0))) {
                    *wj += eta * y[i] * xj;
                }
            }
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > radius {
                let s = radius / norm;
                w.iter_mut().for_each(|v| *v *= s);
            }
        }
    }
    w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    /// One weight vector per class (bias last).
    weights: Vec<Vec<f64>>,
}

impl LinearSvm {
    /// Class `c` trains on stream `c` of `seed`.
    pub fn fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, params: &SvmParams, seed: u64) -> Result<Self> {
        if !(params.lambda > 0.0) {
            return Err(Error::InvalidParameter("svm lambda must be positive".into()));
        }
        let weights = (0..n_classes)
            .into_par_iter()
            .map(|c| {
                let target: Vec<f64> = y.iter().map(|&v| if v == c { 1.0 } else { -1.0 }).collect();
                pegasos(x, &target, params, &mut seed::rng_stream(seed, c as u64))
            })
            .collect();
        Ok(LinearSvm { weights })
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    /// Largest margin; ties go to the smaller class index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for (c, w) in self.weights.iter().enumerate() {
            let m = margin(w, x);
            if m > best.1 {
                best = (c, m);
            }
        }
        best.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn objective_at_zero_is_one() {
        let x = vec![vec![1.0, 2.0], vec![-1.0, 0.5]];
        let y = vec![1.0, -1.0];
        assert_eq!(objective(&[0.0, 0.0, 0.0], &x, &y, 0.1), 1.0);
    }

    #[test]
    fn separable_line() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![if i < 20 { -2.0 } else { 2.0 } + 0.01 * i as f64]).collect();
        let y: Vec<usize> = (0..40).map(|i| usize::from(i >= 20)).collect();
        let m = LinearSvm::fit(&x, &y, 2, &SvmParams::default(), 1).unwrap();
        for (xi, &yi) in x.iter().zip(&y) {
            assert_eq!(m.predict(xi), yi);
        }
    }
}
