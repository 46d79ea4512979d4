//! Multilayer perceptron: ReLU hidden layers, softmax output, weighted
//! cross-entropy, mini-batch gradient descent with momentum, early stopping
//! on a held-in validation slice split by patient.
//!
//! Parameters live in one flat buffer so gradient checking and serialization
//! stay simple. The output layer starts at zero, which makes training
//! equivariant under a permutation of class identities.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rng::rng_for;

use super::softmax::softmax_in_place;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub l2: f64,
    pub early_stopping: bool,
    /// Fraction of training patients held in as a validation slice.
    pub validation_fraction: f64,
    pub patience: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden: vec![64, 32],
            epochs: 200,
            batch_size: 64,
            learning_rate: 0.05,
            momentum: 0.9,
            l2: 1e-5,
            early_stopping: true,
            validation_fraction: 0.1,
            patience: 15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNet {
    /// Layer widths, input first: [d, h1, ..., C].
    pub shape: Vec<usize>,
    /// Flat parameters: per layer, W (out x in, row-major) then b (out).
    pub params: Vec<f64>,
}

impl MlpNet {
    pub fn init(shape: Vec<usize>, seed: u64) -> MlpNet {
        assert!(shape.len() >= 2);
        let mut rng = rng_for(seed, &[crate::rng::stage::TRAIN]);
        let n_layers = shape.len() - 1;
        let mut params = Vec::new();
        for l in 0..n_layers {
            let (fan_in, fan_out) = (shape[l], shape[l + 1]);
            if l + 1 == n_layers {
                params.extend(std::iter::repeat(0.0).take(fan_out * fan_in + fan_out));
            } else {
                let sd = (2.0 / fan_in as f64).sqrt();
                let dist = Normal::new(0.0, sd).unwrap();
                params.extend((0..fan_out * fan_in).map(|_| dist.sample(&mut rng)));
                params.extend(std::iter::repeat(0.0).take(fan_out));
            }
        }
        MlpNet { shape, params }
    }

    pub fn n_layers(&self) -> usize {
        self.shape.len() - 1
    }

    /// (weight offset, bias offset) for layer `l` in the flat buffer.
    fn offsets(&self, l: usize) -> (usize, usize) {
        let mut off = 0;
        for k in 0..l {
            off += self.shape[k + 1] * self.shape[k] + self.shape[k + 1];
        }
        (off, off + self.shape[l + 1] * self.shape[l])
    }

    pub fn n_classes(&self) -> usize {
        *self.shape.last().unwrap()
    }

    /// Forward pass for one row; returns class probabilities.
    pub fn predict_row(&self, row: &[f64]) -> Vec<f64> {
        let mut a = row.to_vec();
        for l in 0..self.n_layers() {
            a = self.layer_forward(l, &a, l + 1 < self.n_layers());
        }
        softmax_in_place(&mut a);
        a
    }

    fn layer_forward(&self, l: usize, input: &[f64], relu: bool) -> Vec<f64> {
        let (w_off, b_off) = self.offsets(l);
        let (fan_in, fan_out) = (self.shape[l], self.shape[l + 1]);
        let mut out = vec![0.0; fan_out];
        for o in 0..fan_out {
            let w = &self.params[w_off + o * fan_in..w_off + (o + 1) * fan_in];
            let mut z = self.params[b_off + o];
            for (wi, xi) in w.iter().zip(input) {
                z += wi * xi;
            }
            out[o] = if relu { z.max(0.0) } else { z };
        }
        out
    }

    /// Weighted cross-entropy loss plus L2 penalty over the given rows, and
    /// its gradient with respect to every parameter (flat, same layout).
    pub fn loss_and_grad(
        &self,
        x: &[f64],
        n_features: usize,
        rows: &[usize],
        labels: &[usize],
        sample_weights: &[f64],
        l2: f64,
    ) -> (f64, Vec<f64>) {
        let n_layers = self.n_layers();
        let mut grad = vec![0.0; self.params.len()];
        let weight_total: f64 = rows.iter().map(|&i| sample_weights[i]).sum();
        let mut loss = 0.0;

        for &i in rows {
            let row = &x[i * n_features..(i + 1) * n_features];
            // Forward, keeping activations per layer.
            let mut activations: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
            activations.push(row.to_vec());
            for l in 0..n_layers {
                let a = self.layer_forward(l, &activations[l], l + 1 < n_layers);
                activations.push(a);
            }
            let mut probs = activations[n_layers].clone();
            softmax_in_place(&mut probs);
            let wi = sample_weights[i] / weight_total;
            loss -= wi * probs[labels[i]].max(1e-300).ln();

            // Backward.
            let mut delta: Vec<f64> = probs;
            delta[labels[i]] -= 1.0;
            for d in &mut delta {
                *d *= wi;
            }
            for l in (0..n_layers).rev() {
                let (w_off, b_off) = self.offsets(l);
                let (fan_in, fan_out) = (self.shape[l], self.shape[l + 1]);
                let input = &activations[l];
                for o in 0..fan_out {
                    grad[b_off + o] += delta[o];
                    let gw = &mut grad[w_off + o * fan_in..w_off + (o + 1) * fan_in];
                    for (g, &v) in gw.iter_mut().zip(input.iter()) {
                        *g += delta[o] * v;
                    }
                }
                if l > 0 {
                    let mut prev = vec![0.0; fan_in];
                    for o in 0..fan_out {
                        let w = &self.params[w_off + o * fan_in..w_off + (o + 1) * fan_in];
                        for (p, &wv) in prev.iter_mut().zip(w) {
                            *p += delta[o] * wv;
                        }
                    }
                    // ReLU gate on the hidden activation.
                    for (p, &a) in prev.iter_mut().zip(activations[l].iter()) {
                        if a <= 0.0 {
                            *p = 0.0;
                        }
                    }
                    delta = prev;
                }
            }
        }

        // L2 on weights only, not biases.
        if l2 > 0.0 {
            for l in 0..n_layers {
                let (w_off, b_off) = self.offsets(l);
                for k in w_off..b_off {
                    loss += 0.5 * l2 * self.params[k] * self.params[k];
                    grad[k] += l2 * self.params[k];
                }
            }
        }
        (loss, grad)
    }
}

/// Split patient groups into (train rows, validation rows) for early
/// stopping. The split is by patient, never by point.
fn validation_split(
    groups: &[usize],
    fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut patients: Vec<usize> = {
        let mut s = groups.to_vec();
        s.sort_unstable();
        s.dedup();
        s
    };
    if patients.len() < 2 || fraction <= 0.0 {
        return ((0..groups.len()).collect(), Vec::new());
    }
    let mut rng = rng_for(seed, &[crate::rng::stage::TRAIN, 0x7a11]);
    patients.shuffle(&mut rng);
    let n_val = ((fraction * patients.len() as f64).ceil() as usize)
        .max(1)
        .min(patients.len() - 1);
    let val_set: std::collections::BTreeSet<usize> = patients[..n_val].iter().copied().collect();
    let mut train_rows = Vec::new();
    let mut val_rows = Vec::new();
    for (i, g) in groups.iter().enumerate() {
        if val_set.contains(g) {
            val_rows.push(i);
        } else {
            train_rows.push(i);
        }
    }
    (train_rows, val_rows)
}

/// Train an MLP on standardized features.
pub fn train_mlp(
    x: &[f64],
    n_rows: usize,
    n_features: usize,
    labels: &[usize],
    n_classes: usize,
    groups: &[usize],
    sample_weights: &[f64],
    params: &MlpParams,
    seed: u64,
) -> MlpNet {
    let mut shape = Vec::with_capacity(params.hidden.len() + 2);
    shape.push(n_features);
    shape.extend_from_slice(&params.hidden);
    shape.push(n_classes);
    let mut net = MlpNet::init(shape, seed);

    let (train_rows, val_rows) = if params.early_stopping {
        validation_split(groups, params.validation_fraction, seed)
    } else {
        ((0..n_rows).collect(), Vec::new())
    };

    let mut velocity = vec![0.0; net.params.len()];
    let mut order = train_rows.clone();
    let mut rng = rng_for(seed, &[crate::rng::stage::TRAIN, 0x0e9]);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut stall = 0usize;

    for _epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(params.batch_size.max(1)) {
            let (_, grad) =
                net.loss_and_grad(x, n_features, batch, labels, sample_weights, params.l2);
            for ((p, v), g) in net.params.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = params.momentum * *v - params.learning_rate * g;
                *p += *v;
            }
        }
        if !val_rows.is_empty() {
            let (val_loss, _) =
                net.loss_and_grad(x, n_features, &val_rows, labels, sample_weights, 0.0);
            let improved = best.as_ref().map(|(b, _)| val_loss < b - 1e-9).unwrap_or(true);
            if improved {
                best = Some((val_loss, net.params.clone()));
                stall = 0;
            } else {
                stall += 1;
                if stall >= params.patience {
                    break;
                }
            }
        }
    }
    if let Some((_, p)) = best {
        net.params = p;
    }
    net
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finite_difference_grad(
        net: &MlpNet,
        x: &[f64],
        d: usize,
        rows: &[usize],
        labels: &[usize],
        weights: &[f64],
        l2: f64,
    ) -> Vec<f64> {
        let h = 1e-5;
        let mut grad = vec![0.0; net.params.len()];
        let mut work = net.clone();
        for k in 0..net.params.len() {
            work.params[k] = net.params[k] + h;
            let (lp, _) = work.loss_and_grad(x, d, rows, labels, weights, l2);
            work.params[k] = net.params[k] - h;
            let (lm, _) = work.loss_and_grad(x, d, rows, labels, weights, l2);
            work.params[k] = net.params[k];
            grad[k] = (lp - lm) / (2.0 * h);
        }
        grad
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let mut rng = crate::rng::rng_for(77, &[]);
        use rand::Rng;
        for trial in 0..5u64 {
            let d = rng.gen_range(2..5);
            let h1 = rng.gen_range(3..6);
            let c = rng.gen_range(2..4);
            let n = 6;
            let x: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
            let weights = vec![1.0; n];
            let mut net = MlpNet::init(vec![d, h1, c], 1000 + trial);
            // Perturb the zero-initialized output layer so the check explores
            // a generic point.
            for (k, p) in net.params.iter_mut().enumerate() {
                if *p == 0.0 {
                    *p = 0.1 * ((k % 7) as f64 - 3.0) / 7.0;
                }
            }
            let rows: Vec<usize> = (0..n).collect();
            let (_, analytic) = net.loss_and_grad(&x, d, &rows, &labels, &weights, 1e-4);
            let numeric = finite_difference_grad(&net, &x, d, &rows, &labels, &weights, 1e-4);
            let num: f64 =
                analytic.iter().zip(&numeric).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let den: f64 = numeric.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            assert!(num / den <= 1e-4, "trial {trial}: relative grad error {}", num / den);
        }
    }

    #[test]
    fn validation_split_is_by_patient() {
        let groups = vec![0, 0, 1, 1, 2, 2, 3, 3, 4, 4];
        let (train, val) = validation_split(&groups, 0.2, 9);
        assert!(!val.is_empty());
        let val_patients: std::collections::BTreeSet<usize> =
            val.iter().map(|&i| groups[i]).collect();
        for &i in &train {
            assert!(!val_patients.contains(&groups[i]), "patient leaked across the split");
        }
        // Both rows of each patient land on the same side.
        assert_eq!(val.len() % 2, 0);
    }

    #[test]
    fn separable_blobs_reach_perfect_training_accuracy() {
        let mut rng = crate::rng::rng_for(5, &[]);
        use rand::Rng;
        let n_per = 30;
        let mut x = Vec::new();
        let mut labels = Vec::new();
        for class in 0..2usize {
            for _ in 0..n_per {
                let cx = if class == 0 { -2.0 } else { 2.0 };
                x.push(cx + rng.gen_range(-0.5..0.5));
                x.push(cx + rng.gen_range(-0.5..0.5));
                labels.push(class);
            }
        }
        let weights = vec![1.0; labels.len()];
        let groups: Vec<usize> = (0..labels.len()).map(|i| i % 5).collect();
        let params = MlpParams {
            hidden: vec![16],
            epochs: 120,
            early_stopping: false,
            ..Default::default()
        };
        let net =
            train_mlp(&x, labels.len(), 2, &labels, 2, &groups, &weights, &params, 3);
        let correct = labels
            .iter()
            .enumerate()
            .filter(|(i, &y)| {
                let p = net.predict_row(&x[i * 2..i * 2 + 2]);
                (p[1] > p[0]) == (y == 1)
            })
            .count();
        assert_eq!(correct, labels.len(), "training accuracy below 100%");
    }
}
