//! Random forest with weighted Gini splitting and probability-averaging
//! leaves. Trees train in parallel under per-tree derived seeds.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::{derive_seed, rng_for};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features tried per split; None means ceil(sqrt(d)).
    pub feature_subsample: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: 12, min_samples_leaf: 5, feature_subsample: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { dist: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_dist<'a>(&'a self, row: &[f64]) -> &'a [f64] {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { dist } => return dist,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub n_classes: usize,
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

impl ForestModel {
    pub fn predict_row(&self, row: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_classes];
        for tree in &self.trees {
            for (a, &p) in acc.iter_mut().zip(tree.leaf_dist(row)) {
                *a += p;
            }
        }
        let sum: f64 = acc.iter().sum();
        if sum > 0.0 {
            for a in &mut acc {
                *a /= sum;
            }
        }
        acc
    }
}

struct TreeBuilder<'a> {
    x: &'a [f64],
    d: usize,
    labels: &'a [usize],
    weights: &'a [f64],
    n_classes: usize,
    params: &'a ForestParams,
    k_features: usize,
    nodes: Vec<Node>,
    rng: rand_chacha::ChaCha8Rng,
}

impl<'a> TreeBuilder<'a> {
    fn weighted_counts(&self, rows: &[usize]) -> Vec<f64> {
        let mut counts = vec![0.0; self.n_classes];
        for &i in rows {
            counts[self.labels[i]] += self.weights[i];
        }
        counts
    }

    fn gini(counts: &[f64]) -> f64 {
        let total: f64 = counts.iter().sum();
        if total <= 0.0 {
            return 0.0;
        }
        1.0 - counts.iter().map(|&c| (c / total) * (c / total)).sum::<f64>()
    }

    fn leaf(&mut self, counts: Vec<f64>) -> usize {
        let total: f64 = counts.iter().sum();
        let dist = if total > 0.0 {
            counts.iter().map(|&c| c / total).collect()
        } else {
            vec![1.0 / self.n_classes as f64; self.n_classes]
        };
        self.nodes.push(Node::Leaf { dist });
        self.nodes.len() - 1
    }

    fn build(&mut self, mut rows: Vec<usize>, depth: usize) -> usize {
        let counts = self.weighted_counts(&rows);
        let impurity = Self::gini(&counts);
        if depth >= self.params.max_depth
            || rows.len() < 2 * self.params.min_samples_leaf
            || impurity <= 1e-12
        {
            return self.leaf(counts);
        }

        let features = sample(&mut self.rng, self.d, self.k_features);
        let total_weight: f64 = counts.iter().sum();
        let mut best: Option<(f64, usize, f64)> = None; // (score, feature, threshold)

        for f in features.iter() {
            rows.sort_unstable_by(|&a, &b| {
                self.x[a * self.d + f].partial_cmp(&self.x[b * self.d + f]).unwrap()
            });
            let mut left = vec![0.0; self.n_classes];
            let mut left_weight = 0.0;
            for split_at in 1..rows.len() {
                let prev = rows[split_at - 1];
                left[self.labels[prev]] += self.weights[prev];
                left_weight += self.weights[prev];
                let prev_v = self.x[prev * self.d + f];
                let next_v = self.x[rows[split_at] * self.d + f];
                if next_v <= prev_v {
                    continue;
                }
                if split_at < self.params.min_samples_leaf
                    || rows.len() - split_at < self.params.min_samples_leaf
                {
                    continue;
                }
                let right: Vec<f64> =
                    counts.iter().zip(&left).map(|(c, l)| c - l).collect();
                let right_weight = total_weight - left_weight;
                let score = (left_weight * Self::gini(&left)
                    + right_weight * Self::gini(&right))
                    / total_weight;
                if best.map(|(s, _, _)| score < s - 1e-15).unwrap_or(true) {
                    best = Some((score, f, 0.5 * (prev_v + next_v)));
                }
            }
        }

        let Some((score, feature, threshold)) = best else {
            return self.leaf(counts);
        };
        if score >= impurity - 1e-12 {
            return self.leaf(counts);
        }

        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| self.x[i * self.d + feature] <= threshold);
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { dist: Vec::new() }); // placeholder
        let left = self.build(left_rows, depth + 1);
        let right = self.build(right_rows, depth + 1);
        self.nodes[slot] = Node::Split { feature, threshold, left, right };
        slot
    }
}

/// Train a forest on standardized features with per-sample weights.
pub fn train_forest(
    x: &[f64],
    n_rows: usize,
    n_features: usize,
    labels: &[usize],
    n_classes: usize,
    sample_weights: &[f64],
    params: &ForestParams,
    seed: u64,
) -> ForestModel {
    let k_features = params
        .feature_subsample
        .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
        .clamp(1, n_features);

    let trees: Vec<Tree> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let tree_seed = derive_seed(seed, &[crate::rng::stage::TRAIN, t as u64]);
            let mut rng = rng_for(tree_seed, &[]);
            let rows: Vec<usize> = (0..n_rows).map(|_| rng.gen_range(0..n_rows)).collect();
            let mut builder = TreeBuilder {
                x,
                d: n_features,
                labels,
                weights: sample_weights,
                n_classes,
                params,
                k_features,
                nodes: Vec::new(),
                rng,
            };
            let root = builder.build(rows, 0);
            debug_assert_eq!(root, 0);
            Tree { nodes: builder.nodes }
        })
        .collect();

    ForestModel { n_classes, n_features, trees }
}
