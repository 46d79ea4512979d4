//! Multinomial logistic regression trained by full-batch gradient descent
//! with momentum. Parameters start at zero, so training is label-permutation
//! equivariant and needs no randomness.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub l2: f64,
}

impl Default for SoftmaxParams {
    fn default() -> Self {
        Self { epochs: 400, learning_rate: 0.3, momentum: 0.9, l2: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxModel {
    pub n_classes: usize,
    pub n_features: usize,
    /// C x d row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

pub fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in logits.iter_mut() {
        *v /= sum;
    }
}

impl SoftmaxModel {
    pub fn logits(&self, row: &[f64], out: &mut [f64]) {
        for c in 0..self.n_classes {
            let w = &self.weights[c * self.n_features..(c + 1) * self.n_features];
            out[c] = self.bias[c] + w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_classes];
        self.logits(row, &mut out);
        softmax_in_place(&mut out);
        out
    }
}

/// Train on standardized features with per-sample weights.
pub fn train_softmax(
    x: &[f64],
    n_rows: usize,
    n_features: usize,
    labels: &[usize],
    n_classes: usize,
    sample_weights: &[f64],
    params: &SoftmaxParams,
) -> SoftmaxModel {
    let mut model = SoftmaxModel {
        n_classes,
        n_features,
        weights: vec![0.0; n_classes * n_features],
        bias: vec![0.0; n_classes],
    };
    let weight_total: f64 = sample_weights.iter().sum();
    let mut vel_w = vec![0.0; model.weights.len()];
    let mut vel_b = vec![0.0; n_classes];
    let mut probs = vec![0.0; n_classes];
    let mut grad_w = vec![0.0; model.weights.len()];
    let mut grad_b = vec![0.0; n_classes];

    for _ in 0..params.epochs {
        grad_w.iter_mut().for_each(|v| *v = 0.0);
        grad_b.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n_rows {
            let row = &x[i * n_features..(i + 1) * n_features];
            model.logits(row, &mut probs);
            softmax_in_place(&mut probs);
            let wi = sample_weights[i] / weight_total;
            for c in 0..n_classes {
                let delta = wi * (probs[c] - if labels[i] == c { 1.0 } else { 0.0 });
                grad_b[c] += delta;
                let gw = &mut grad_w[c * n_features..(c + 1) * n_features];
                for (g, &v) in gw.iter_mut().zip(row) {
                    *g += delta * v;
                }
            }
        }
        for (g, &w) in grad_w.iter_mut().zip(&model.weights) {
            *g += params.l2 * w;
        }
        for (v, g) in vel_w.iter_mut().zip(&grad_w) {
            *v = params.momentum * *v - params.learning_rate * g;
        }
        for (v, g) in vel_b.iter_mut().zip(&grad_b) {
            *v = params.momentum * *v - params.learning_rate * g;
        }
        for (w, v) in model.weights.iter_mut().zip(&vel_w) {
            *w += v;
        }
        for (b, v) in model.bias.iter_mut().zip(&vel_b) {
            *b += v;
        }
    }
    model
}
