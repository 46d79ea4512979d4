//! Trainable multi-class probabilistic classifiers and the baseline
//! selection rule.

mod forest;
mod mlp;
mod posterior;
mod softmax;
mod standardize;

pub use forest::{train_forest, ForestModel, ForestParams};
pub use mlp::{train_mlp, MlpNet, MlpParams};
pub use posterior::{normalize_rows, PosteriorMatrix, ROW_SUM_TOL};
pub use softmax::{softmax_in_place, train_softmax, SoftmaxModel, SoftmaxParams};
pub use standardize::Standardizer;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mlp,
    RandomForest,
    Softmax,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Mlp, ModelKind::RandomForest, ModelKind::Softmax];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mlp => "mlp",
            ModelKind::RandomForest => "random_forest",
            ModelKind::Softmax => "softmax",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Hyperparameters for every model kind.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ZooConfig {
    #[serde(default)]
    pub softmax: SoftmaxParams,
    #[serde(default)]
    pub mlp: MlpParams,
    #[serde(default)]
    pub forest: ForestParams,
}

/// Borrowed view of a training set.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub x: &'a FeatureMatrix,
    pub labels: &'a [usize],
    /// Patient index per row; the early-stopping split is by patient.
    pub groups: &'a [usize],
    pub n_classes: usize,
}

impl TrainData<'_> {
    fn validate(&self) -> Result<()> {
        let n = self.x.n_rows;
        if self.labels.len() != n || self.groups.len() != n {
            return Err(Error::Input(format!(
                "row count mismatch: {} features, {} labels, {} groups",
                n,
                self.labels.len(),
                self.groups.len()
            )));
        }
        if let Some(&bad) = self.labels.iter().find(|&&y| y >= self.n_classes) {
            return Err(Error::Input(format!(
                "label {bad} out of range for {} classes",
                self.n_classes
            )));
        }
        let mut present = vec![false; self.n_classes];
        for &y in self.labels {
            present[y] = true;
        }
        if present.iter().filter(|&&p| p).count() < 2 {
            return Err(Error::Training("training set contains fewer than 2 classes".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
enum ModelInner {
    Softmax(SoftmaxModel),
    Mlp(MlpNet),
    Forest(ForestModel),
}

/// Model serialization format version.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// A trained classifier plus the standardization it was fit with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub version: u32,
    pub kind: ModelKind,
    pub n_classes: usize,
    pub standardizer: Standardizer,
    inner: ModelInner,
    pub seed: u64,
}

/// Per-class weights inversely proportional to class frequency, normalized
/// to mean 1 over samples. Absent classes get weight 0.
pub fn class_weights(labels: &[usize], n_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n_classes];
    for &y in labels {
        counts[y] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count() as f64;
    let n = labels.len() as f64;
    counts
        .iter()
        .map(|&c| if c > 0 { n / (present * c as f64) } else { 0.0 })
        .collect()
}

/// Weighted mean cross-entropy of posteriors against labels.
pub fn weighted_cross_entropy(
    posteriors: &PosteriorMatrix,
    labels: &[usize],
    sample_weights: &[f64],
) -> Result<f64> {
    if posteriors.n_rows != labels.len() || labels.len() != sample_weights.len() {
        return Err(Error::Input("cross-entropy input lengths differ".into()));
    }
    let total: f64 = sample_weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::Input("sample weights sum to zero".into()));
    }
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        loss -= sample_weights[i] * posteriors.row(i)[y].max(1e-300).ln();
    }
    Ok(loss / total)
}

/// Train a classifier of the given kind. Deterministic given the seed.
pub fn train(
    kind: ModelKind,
    data: &TrainData<'_>,
    config: &ZooConfig,
    seed: u64,
) -> Result<TrainedModel> {
    data.validate()?;
    let standardizer = Standardizer::fit(data.x)?;
    let x = standardizer.apply(data.x)?;
    let n = data.x.n_rows;
    let d = data.x.n_cols;

    let per_class = class_weights(data.labels, data.n_classes);
    let sample_weights: Vec<f64> = data.labels.iter().map(|&y| per_class[y]).collect();

    let inner = match kind {
        ModelKind::Softmax => ModelInner::Softmax(train_softmax(
            &x,
            n,
            d,
            data.labels,
            data.n_classes,
            &sample_weights,
            &config.softmax,
        )),
        ModelKind::Mlp => ModelInner::Mlp(train_mlp(
            &x,
            n,
            d,
            data.labels,
            data.n_classes,
            data.groups,
            &sample_weights,
            &config.mlp,
            seed,
        )),
        ModelKind::RandomForest => ModelInner::Forest(train_forest(
            &x,
            n,
            d,
            data.labels,
            data.n_classes,
            &sample_weights,
            &config.forest,
            seed,
        )),
    };

    Ok(TrainedModel {
        version: MODEL_FORMAT_VERSION,
        kind,
        n_classes: data.n_classes,
        standardizer,
        inner,
        seed,
    })
}

impl TrainedModel {
    /// Class posteriors for a feature matrix; rows sum to 1 within 1e-9.
    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<PosteriorMatrix> {
        if x.n_cols != self.standardizer.dimension() {
            return Err(Error::Input(format!(
                "feature dimension {} does not match model dimension {}",
                x.n_cols,
                self.standardizer.dimension()
            )));
        }
        let z = self.standardizer.apply(x)?;
        let mut data = Vec::with_capacity(x.n_rows * self.n_classes);
        for i in 0..x.n_rows {
            let row = &z[i * x.n_cols..(i + 1) * x.n_cols];
            let probs = match &self.inner {
                ModelInner::Softmax(m) => m.predict_row(row),
                ModelInner::Mlp(m) => m.predict_row(row),
                ModelInner::Forest(m) => m.predict_row(row),
            };
            data.extend_from_slice(&probs);
        }
        normalize_rows(self.n_classes, &mut data);
        PosteriorMatrix::new(x.n_rows, self.n_classes, data)
    }

    /// Versioned JSON serialization.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<TrainedModel> {
        let model: TrainedModel = serde_json::from_str(text)?;
        if model.version != MODEL_FORMAT_VERSION {
            return Err(Error::Input(format!(
                "unsupported model format version {}",
                model.version
            )));
        }
        Ok(model)
    }
}

/// Accuracy plus one-vs-rest AUC per class, with the selection score
/// 0.5 * (accuracy + mean AUC).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub accuracy: f64,
    pub per_class_auc: Vec<f64>,
}

impl ModelMetrics {
    pub fn mean_auc(&self) -> f64 {
        if self.per_class_auc.is_empty() {
            return f64::NAN;
        }
        self.per_class_auc.iter().sum::<f64>() / self.per_class_auc.len() as f64
    }

    pub fn selection_score(&self) -> f64 {
        0.5 * (self.accuracy + self.mean_auc())
    }
}

/// Pick the winning model kind: argmax of the selection score, ties broken
/// by higher accuracy, then lexicographic kind name.
pub fn select_baseline(candidates: &[(ModelKind, ModelMetrics)]) -> Result<ModelKind> {
    if candidates.is_empty() {
        return Err(Error::Input("no candidates to select from".into()));
    }
    for (kind, m) in candidates {
        if !m.accuracy.is_finite() || !m.mean_auc().is_finite() {
            return Err(Error::Input(format!("candidate {kind} has incomplete metrics")));
        }
    }
    let best = candidates
        .iter()
        .min_by(|(ka, ma), (kb, mb)| {
            mb.selection_score()
                .partial_cmp(&ma.selection_score())
                .unwrap()
                .then(mb.accuracy.partial_cmp(&ma.accuracy).unwrap())
                .then(ka.name().cmp(kb.name()))
        })
        .unwrap();
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: Vec<Vec<f64>>) -> FeatureMatrix {
        let n_cols = rows[0].len();
        FeatureMatrix {
            names: (0..n_cols).map(|j| format!("f{j}")).collect(),
            n_rows: rows.len(),
            n_cols,
            data: rows.into_iter().flatten().collect(),
        }
    }

    fn blobs(n_per: usize, centers: &[f64], spread: f64, seed: u64) -> (FeatureMatrix, Vec<usize>) {
        use rand::Rng;
        let mut rng = crate::rng::rng_for(seed, &[]);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, &center) in centers.iter().enumerate() {
            for _ in 0..n_per {
                rows.push(vec![
                    center + rng.gen_range(-spread..spread),
                    -center + rng.gen_range(-spread..spread),
                ]);
                labels.push(c);
            }
        }
        (matrix(rows), labels)
    }

    #[test]
    fn all_kinds_train_and_emit_simplex_posteriors() {
        let (x, labels) = blobs(25, &[-2.0, 0.0, 2.0], 0.6, 1);
        let groups: Vec<usize> = (0..labels.len()).map(|i| i % 6).collect();
        let data = TrainData { x: &x, labels: &labels, groups: &groups, n_classes: 3 };
        let config = ZooConfig {
            mlp: MlpParams { hidden: vec![16], epochs: 60, ..Default::default() },
            forest: ForestParams { n_trees: 15, ..Default::default() },
            ..Default::default()
        };
        for kind in ModelKind::ALL {
            let model = train(kind, &data, &config, 7).unwrap();
            let p = model.predict_proba(&x).unwrap();
            p.validate().unwrap();
            let preds = p.predicted_labels();
            let acc = preds.iter().zip(&labels).filter(|(a, b)| a == b).count() as f64
                / labels.len() as f64;
            assert!(acc > 0.9, "{kind} accuracy {acc}");
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (x, labels) = blobs(15, &[-1.0, 1.0], 0.9, 2);
        let groups: Vec<usize> = (0..labels.len()).map(|i| i % 4).collect();
        let data = TrainData { x: &x, labels: &labels, groups: &groups, n_classes: 2 };
        let config = ZooConfig {
            mlp: MlpParams { hidden: vec![8], epochs: 30, ..Default::default() },
            forest: ForestParams { n_trees: 6, ..Default::default() },
            ..Default::default()
        };
        for kind in ModelKind::ALL {
            let a = train(kind, &data, &config, 42).unwrap();
            let b = train(kind, &data, &config, 42).unwrap();
            assert_eq!(a, b, "{kind} differs across identical runs");
        }
    }

    #[test]
    fn duplicate_rows_get_identical_posteriors() {
        let (x, labels) = blobs(15, &[-1.0, 1.0], 0.9, 3);
        let groups: Vec<usize> = (0..labels.len()).map(|i| i % 4).collect();
        let data = TrainData { x: &x, labels: &labels, groups: &groups, n_classes: 2 };
        let model = train(ModelKind::Softmax, &data, &ZooConfig::default(), 0).unwrap();
        let dup = matrix(vec![x.row(0).to_vec(), x.row(0).to_vec()]);
        let p = model.predict_proba(&dup).unwrap();
        assert_eq!(p.row(0), p.row(1));
    }

    #[test]
    fn single_class_input_is_a_training_error() {
        let x = matrix(vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        let labels = vec![1, 1];
        let groups = vec![0, 1];
        let data = TrainData { x: &x, labels: &labels, groups: &groups, n_classes: 3 };
        assert!(matches!(
            train(ModelKind::Softmax, &data, &ZooConfig::default(), 0),
            Err(Error::Training(_))
        ));
    }

    #[test]
    fn nan_features_are_an_input_error() {
        let x = matrix(vec![vec![0.0, f64::NAN], vec![1.0, 0.0]]);
        let labels = vec![0, 1];
        let groups = vec![0, 1];
        let data = TrainData { x: &x, labels: &labels, groups: &groups, n_classes: 2 };
        assert!(matches!(
            train(ModelKind::Softmax, &data, &ZooConfig::default(), 0),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn duplicated_minority_equals_weighting() {
        // Cross-entropy with weight k on a sample equals the loss with the
        // sample repeated k times at weight 1.
        let p = PosteriorMatrix::new(3, 2, vec![0.7, 0.3, 0.6, 0.4, 0.2, 0.8]).unwrap();
        let weighted =
            weighted_cross_entropy(&p, &[0, 0, 1], &[1.0, 1.0, 3.0]).unwrap();
        let dup = PosteriorMatrix::new(
            5,
            2,
            vec![0.7, 0.3, 0.6, 0.4, 0.2, 0.8, 0.2, 0.8, 0.2, 0.8],
        )
        .unwrap();
        let duplicated =
            weighted_cross_entropy(&dup, &[0, 0, 1, 1, 1], &[1.0; 5]).unwrap();
        assert!((weighted - duplicated).abs() < 1e-9);
    }

    #[test]
    fn label_permutation_permutes_posterior_columns() {
        let (x, labels) = blobs(20, &[-2.0, 0.0, 2.0], 0.5, 9);
        let groups: Vec<usize> = (0..labels.len()).map(|i| i % 5).collect();
        let perm = [2usize, 0, 1];
        let permuted: Vec<usize> = labels.iter().map(|&y| perm[y]).collect();
        let config = ZooConfig {
            mlp: MlpParams { hidden: vec![8], epochs: 40, early_stopping: false, ..Default::default() },
            ..Default::default()
        };
        for kind in [ModelKind::Softmax, ModelKind::Mlp] {
            let a = train(
                kind,
                &TrainData { x: &x, labels: &labels, groups: &groups, n_classes: 3 },
                &config,
                4,
            )
            .unwrap();
            let b = train(
                kind,
                &TrainData { x: &x, labels: &permuted, groups: &groups, n_classes: 3 },
                &config,
                4,
            )
            .unwrap();
            let pa = a.predict_proba(&x).unwrap();
            let pb = b.predict_proba(&x).unwrap();
            for i in 0..pa.n_rows {
                for c in 0..3 {
                    let diff = (pa.row(i)[c] - pb.row(i)[perm[c]]).abs();
                    assert!(diff < 1e-9, "{kind} row {i} class {c}: {diff}");
                }
            }
        }
    }

    #[test]
    fn selection_rule_matches_hand_arithmetic() {
        // A: 0.5*(0.50+0.60) = 0.55; B: 0.5*(0.44+0.90) = 0.67 -> B wins.
        let a = ModelMetrics { accuracy: 0.50, per_class_auc: vec![0.60, 0.60] };
        let b = ModelMetrics { accuracy: 0.44, per_class_auc: vec![0.90, 0.90] };
        let winner = select_baseline(&[(ModelKind::Softmax, a), (ModelKind::Mlp, b)]).unwrap();
        assert_eq!(winner, ModelKind::Mlp);
    }

    #[test]
    fn equal_aucs_reduce_selection_to_accuracy() {
        // Accuracies 25.45, 24.78, 22.70, 43.92, 27.47 percent with equal
        // AUCs: the 43.92% candidate wins.
        let accs = [0.2545, 0.2478, 0.2270, 0.4392, 0.2747];
        let kinds =
            [ModelKind::RandomForest, ModelKind::Softmax, ModelKind::RandomForest, ModelKind::Mlp, ModelKind::Softmax];
        let candidates: Vec<(ModelKind, ModelMetrics)> = accs
            .iter()
            .zip(kinds)
            .map(|(&acc, kind)| {
                (kind, ModelMetrics { accuracy: acc, per_class_auc: vec![0.7; 3] })
            })
            .collect();
        assert_eq!(select_baseline(&candidates).unwrap(), ModelKind::Mlp);
    }

    #[test]
    fn single_candidate_selects_itself_and_empty_errors() {
        let m = ModelMetrics { accuracy: 0.3, per_class_auc: vec![0.5] };
        assert_eq!(
            select_baseline(&[(ModelKind::Softmax, m)]).unwrap(),
            ModelKind::Softmax
        );
        assert!(select_baseline(&[]).is_err());
    }

    #[test]
    fn model_json_round_trip() {
        let (x, labels) = blobs(10, &[-1.0, 1.0], 0.5, 8);
        let groups: Vec<usize> = (0..labels.len()).map(|i| i % 3).collect();
        let data = TrainData { x: &x, labels: &labels, groups: &groups, n_classes: 2 };
        let model = train(ModelKind::Softmax, &data, &ZooConfig::default(), 12).unwrap();
        let json = model.to_json().unwrap();
        let back = TrainedModel::from_json(&json).unwrap();
        assert_eq!(model, back);
        assert_eq!(
            model.predict_proba(&x).unwrap().data,
            back.predict_proba(&x).unwrap().data
        );
    }
}
