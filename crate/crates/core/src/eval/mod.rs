//! Leave-one-patient-out cross-validation and classification metrics.

mod rescore;

pub use rescore::{rescoring_study, RelabelPolicy, RescoreGroupReport, RescoreReport};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::model::{train, ModelKind, ModelMetrics, PosteriorMatrix, TrainData, ZooConfig};
use crate::rng::derive_seed;
use crate::sim::DatasetIndex;

/// One cross-validation fold: a held-out patient and everything else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub test_patient: usize,
    pub train_patients: Vec<usize>,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

/// Exactly one fold per patient; test sets partition the roster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
}

pub fn lopo_splits(index: &DatasetIndex) -> Result<FoldPlan> {
    let n_patients = index.n_patients();
    if n_patients < 2 {
        return Err(Error::Input(format!("LOPO needs at least 2 patients, got {n_patients}")));
    }
    {
        let mut seen = std::collections::BTreeSet::new();
        for id in &index.patient_ids {
            if !seen.insert(id) {
                return Err(Error::Input(format!("duplicate patient id {id} in manifest")));
            }
        }
    }
    let folds = (0..n_patients)
        .map(|p| {
            let mut train_rows = Vec::new();
            let mut test_rows = Vec::new();
            for (row, &patient) in index.point_patient.iter().enumerate() {
                if patient == p {
                    test_rows.push(row);
                } else {
                    train_rows.push(row);
                }
            }
            Fold {
                test_patient: p,
                train_patients: (0..n_patients).filter(|&q| q != p).collect(),
                train_rows,
                test_rows,
            }
        })
        .collect();
    Ok(FoldPlan { folds })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub n_classes: usize,
    /// Row = true class, column = predicted class.
    pub counts: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn get(&self, true_class: usize, predicted: usize) -> usize {
        self.counts[true_class * self.n_classes + predicted]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let correct: usize = (0..self.n_classes).map(|c| self.get(c, c)).sum();
        correct as f64 / self.total() as f64
    }

    /// Diagonal over row sum; NaN for an empty class row.
    pub fn per_class_recall(&self) -> Vec<f64> {
        (0..self.n_classes)
            .map(|c| {
                let row: usize = (0..self.n_classes).map(|j| self.get(c, j)).sum();
                self.get(c, c) as f64 / row as f64
            })
            .collect()
    }

    /// Counts regrouped through a class merge map.
    pub fn regroup(&self, map: &[usize], new_classes: usize) -> ConfusionMatrix {
        let mut counts = vec![0usize; new_classes * new_classes];
        for i in 0..self.n_classes {
            for j in 0..self.n_classes {
                counts[map[i] * new_classes + map[j]] += self.get(i, j);
            }
        }
        ConfusionMatrix { n_classes: new_classes, counts }
    }
}

pub fn confusion_matrix(
    predictions: &[usize],
    labels: &[usize],
    n_classes: usize,
) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(Error::Input(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut counts = vec![0usize; n_classes * n_classes];
    for (&pred, &truth) in predictions.iter().zip(labels) {
        if pred >= n_classes || truth >= n_classes {
            return Err(Error::Input(format!(
                "label pair ({truth}, {pred}) out of range for {n_classes} classes"
            )));
        }
        counts[truth * n_classes + pred] += 1;
    }
    Ok(ConfusionMatrix { n_classes, counts })
}

/// One-vs-rest AUC for class `c` by the rank-sum (Mann-Whitney) statistic
/// with midrank ties: the probability that a random positive outranks a
/// random negative, ties counted half.
pub fn auc_one_vs_rest(scores: &[f64], labels: &[usize], class: usize) -> Result<f64> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::Input("score and label lengths differ or are empty".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y == class).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Input(format!(
            "AUC for class {class} undefined: need both positives and negatives"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    // Midranks over tie groups, then Mann-Whitney U from the positive rank
    // sum.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            if labels[k] == class {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Pooled metrics from posteriors: overall accuracy plus per-class
/// one-vs-rest AUC.
pub fn pooled_metrics(posteriors: &PosteriorMatrix, labels: &[usize]) -> Result<ModelMetrics> {
    let predictions = posteriors.predicted_labels();
    let correct = predictions.iter().zip(labels).filter(|(a, b)| a == b).count();
    let accuracy = correct as f64 / labels.len() as f64;
    let mut per_class_auc = Vec::with_capacity(posteriors.n_classes);
    for c in 0..posteriors.n_classes {
        per_class_auc.push(auc_one_vs_rest(&posteriors.class_column(c), labels, c)?);
    }
    Ok(ModelMetrics { accuracy, per_class_auc })
}

/// Most frequent predicted class within a margin. Ties break toward the
/// larger summed posterior over the tied classes, then the lower index.
pub fn majority_vote(predictions: &[usize], posteriors: &[&[f64]]) -> Result<usize> {
    if predictions.is_empty() {
        return Err(Error::Input("majority vote over an empty margin".into()));
    }
    let n_classes = posteriors.first().map(|r| r.len()).unwrap_or(0);
    let mut votes = vec![0usize; n_classes];
    for &p in predictions {
        votes[p] += 1;
    }
    let top = *votes.iter().max().unwrap();
    let tied: Vec<usize> = (0..n_classes).filter(|&c| votes[c] == top).collect();
    if tied.len() == 1 {
        return Ok(tied[0]);
    }
    let mut best = tied[0];
    let mut best_mass = f64::NEG_INFINITY;
    for &c in &tied {
        let mass: f64 = posteriors.iter().map(|row| row[c]).sum();
        if mass > best_mass {
            best = c;
            best_mass = mass;
        }
    }
    Ok(best)
}

/// Out-of-fold LOPO evaluation: train per fold, assemble the posterior for
/// every point from the fold where it was held out.
pub struct LopoOutcome {
    pub posteriors: PosteriorMatrix,
    pub pooled: ModelMetrics,
    pub fold_accuracy: Vec<f64>,
}

/// `train_mask`, when given, drops rows from every fold's training side
/// (pruning); test sides are never filtered.
#[allow(clippy::too_many_arguments)]
pub fn lopo_evaluate(
    x: &FeatureMatrix,
    labels: &[usize],
    index: &DatasetIndex,
    n_classes: usize,
    kind: ModelKind,
    config: &ZooConfig,
    seed: u64,
    train_mask: Option<&[bool]>,
) -> Result<LopoOutcome> {
    let plan = lopo_splits(index)?;
    if let Some(mask) = train_mask {
        if mask.len() != x.n_rows {
            return Err(Error::Input("train mask length mismatch".into()));
        }
    }

    let fold_results: Result<Vec<(Vec<usize>, PosteriorMatrix)>> = plan
        .folds
        .par_iter()
        .map(|fold| {
            let train_rows: Vec<usize> = match train_mask {
                Some(mask) => fold.train_rows.iter().copied().filter(|&r| mask[r]).collect(),
                None => fold.train_rows.clone(),
            };
            let x_train = x.select_rows(&train_rows);
            let y_train: Vec<usize> = train_rows.iter().map(|&r| labels[r]).collect();
            let g_train: Vec<usize> = train_rows.iter().map(|&r| index.point_patient[r]).collect();
            let data = TrainData { x: &x_train, labels: &y_train, groups: &g_train, n_classes };
            let fold_seed = derive_seed(seed, &[fold.test_patient as u64]);
            let model = train(kind, &data, config, fold_seed)?;
            let x_test = x.select_rows(&fold.test_rows);
            let p = model.predict_proba(&x_test)?;
            Ok((fold.test_rows.clone(), p))
        })
        .collect();
    let fold_results = fold_results?;

    let mut data = vec![0.0; x.n_rows * n_classes];
    let mut fold_accuracy = Vec::with_capacity(fold_results.len());
    for (rows, p) in &fold_results {
        let mut correct = 0usize;
        for (k, &row) in rows.iter().enumerate() {
            data[row * n_classes..(row + 1) * n_classes].copy_from_slice(p.row(k));
            let arg = p
                .row(k)
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            if arg == labels[row] {
                correct += 1;
            }
        }
        fold_accuracy.push(correct as f64 / rows.len() as f64);
    }
    let posteriors = PosteriorMatrix::new(x.n_rows, n_classes, data)?;
    let pooled = pooled_metrics(&posteriors, labels)?;
    Ok(LopoOutcome { posteriors, pooled, fold_accuracy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{synth_dataset, DatasetIndex};

    #[test]
    fn confusion_matrix_hand_count() {
        let m = confusion_matrix(&[0, 1, 1, 1], &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(m.counts, vec![1, 1, 0, 2]);
        assert!((m.accuracy() - 0.75).abs() < 1e-12);
        let recall = m.per_class_recall();
        assert!((recall[0] - 0.5).abs() < 1e-12);
        assert!((recall[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictions_are_diagonal() {
        let labels = vec![0, 1, 2, 2, 1];
        let m = confusion_matrix(&labels, &labels, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_eq!(m.get(i, j), 0);
                }
            }
        }
    }

    #[test]
    fn constant_predictions_fill_one_column() {
        let m = confusion_matrix(&[0, 0, 0], &[0, 1, 2], 3).unwrap();
        for i in 0..3 {
            assert_eq!(m.get(i, 0), 1);
            assert_eq!(m.get(i, 1) + m.get(i, 2), 0);
        }
    }

    #[test]
    fn out_of_range_label_is_an_input_error() {
        assert!(confusion_matrix(&[0, 3], &[0, 1], 2).is_err());
    }

    #[test]
    fn auc_matches_exhaustive_pairwise_oracle() {
        let scores = [0.1, 0.4, 0.35, 0.8];
        let labels = [0usize, 0, 1, 1];
        // Oracle: count positive > negative pairs, ties half.
        let mut wins = 0.0_f64;
        let mut pairs = 0.0_f64;
        for (i, &yi) in labels.iter().enumerate() {
            if yi != 1 {
                continue;
            }
            for (j, &yj) in labels.iter().enumerate() {
                if yj == 1 {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
        let oracle = wins / pairs;
        assert!((oracle - 0.75).abs() < 1e-12);
        let auc = auc_one_vs_rest(&scores, &labels, 1).unwrap();
        assert!((auc - oracle).abs() < 1e-12);
    }

    #[test]
    fn separated_scores_give_unit_auc_and_ties_give_half() {
        let auc = auc_one_vs_rest(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1], 1).unwrap();
        assert_eq!(auc, 1.0);
        let auc = auc_one_vs_rest(&[0.5; 6], &[0, 0, 0, 1, 1, 1], 1).unwrap();
        assert!((auc - 0.5).abs() < 1e-12);
    }

    #[test]
    fn auc_is_invariant_under_monotone_transforms() {
        let scores = [0.05, 0.3, 0.32, 0.6, 0.61, 0.9];
        let labels = [0usize, 1, 0, 1, 1, 1];
        let base = auc_one_vs_rest(&scores, &labels, 1).unwrap();
        let squashed: Vec<f64> = scores.iter().map(|s| (5.0 * s).tanh()).collect();
        let exp: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
        assert_eq!(base, auc_one_vs_rest(&squashed, &labels, 1).unwrap());
        assert_eq!(base, auc_one_vs_rest(&exp, &labels, 1).unwrap());
    }

    #[test]
    fn single_class_auc_is_undefined() {
        assert!(auc_one_vs_rest(&[0.1, 0.2], &[1, 1], 1).is_err());
    }

    #[test]
    fn majority_vote_rules() {
        // Plain majority.
        let rows: Vec<&[f64]> = vec![&[0.9, 0.1], &[0.8, 0.2], &[0.3, 0.7]];
        assert_eq!(majority_vote(&[0, 0, 1], &rows).unwrap(), 0);
        // Tie broken by summed posterior.
        let rows: Vec<&[f64]> = vec![&[0.7, 0.3], &[0.4, 0.6]];
        assert_eq!(majority_vote(&[0, 1], &rows).unwrap(), 0);
        let rows: Vec<&[f64]> = vec![&[0.45, 0.55], &[0.4, 0.6]];
        assert_eq!(majority_vote(&[1, 0], &rows).unwrap(), 1);
        // Single point.
        let rows: Vec<&[f64]> = vec![&[0.2, 0.8]];
        assert_eq!(majority_vote(&[1], &rows).unwrap(), 1);
    }

    #[test]
    fn majority_vote_is_permutation_invariant() {
        let rows: Vec<&[f64]> = vec![&[0.7, 0.3], &[0.2, 0.8], &[0.4, 0.6], &[0.9, 0.1]];
        let preds = [0usize, 1, 1, 0];
        let base = majority_vote(&preds, &rows).unwrap();
        let perm = [2usize, 0, 3, 1];
        let p_preds: Vec<usize> = perm.iter().map(|&i| preds[i]).collect();
        let p_rows: Vec<&[f64]> = perm.iter().map(|&i| rows[i]).collect();
        assert_eq!(base, majority_vote(&p_preds, &p_rows).unwrap());
    }

    #[test]
    fn lopo_folds_partition_patients() {
        let config = crate::sim::test_support::ladder_config(5, 3);
        let ds = synth_dataset(&config, 2).unwrap();
        let index = DatasetIndex::from_manifest(&ds.manifest);
        let plan = lopo_splits(&index).unwrap();
        assert_eq!(plan.folds.len(), 5);
        for fold in &plan.folds {
            for &row in &fold.test_rows {
                assert_eq!(index.point_patient[row], fold.test_patient);
            }
            for &row in &fold.train_rows {
                assert_ne!(index.point_patient[row], fold.test_patient);
            }
            assert!(!fold.train_patients.contains(&fold.test_patient));
        }
        let total_test: usize = plan.folds.iter().map(|f| f.test_rows.len()).sum();
        assert_eq!(total_test, index.n_points());
    }

    #[test]
    fn two_patients_each_train_on_the_other() {
        let mut config = crate::sim::test_support::ladder_config(2, 2);
        config.margins_per_patient = (1, 1);
        let ds = synth_dataset(&config, 9).unwrap();
        let index = DatasetIndex::from_manifest(&ds.manifest);
        let plan = lopo_splits(&index).unwrap();
        assert_eq!(plan.folds.len(), 2);
        assert_eq!(plan.folds[0].train_patients, vec![1]);
        assert_eq!(plan.folds[1].train_patients, vec![0]);
    }
}
