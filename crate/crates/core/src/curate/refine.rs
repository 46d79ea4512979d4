//! Iterative class refinement: merge the most-confused adjacent classes,
//! retrain under LOPO, stop when accuracy stops improving, then prune the
//! low-confidence points from training and retrain once.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{confusion_matrix, lopo_evaluate, ConfusionMatrix};
use crate::features::FeatureMatrix;
use crate::model::{ModelKind, ModelMetrics, PosteriorMatrix, ZooConfig};
use crate::rng::{derive_seed, stage};
use crate::sim::DatasetIndex;

use super::scheme::{apply_map, merge_classes, ClassScheme, MergeGroup};
use super::{
    class_thresholds, confidence_scores, confident_joint, flag_low_confidence,
    prune_training_set, ConfidentJoint, CurationParams,
};

/// How merge candidates are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum MergePolicy {
    /// Merge the adjacent pair with the highest size-normalized symmetric
    /// confusion; stop when the accuracy gain drops below epsilon.
    Auto {
        /// Minimum accuracy gain, in percentage points, to keep a merge.
        epsilon_pp: f64,
    },
    /// Apply an explicit schedule of merge groups, one entry per step.
    Schedule { steps: Vec<Vec<MergeGroup>> },
}

impl Default for MergePolicy {
    fn default() -> Self {
        MergePolicy::Auto { epsilon_pp: 0.5 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RefineParams {
    #[serde(default)]
    pub policy: MergePolicy,
    #[serde(default)]
    pub curation: CurationParams,
}

/// One evaluated scheme along the refinement trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineStep {
    pub scheme: ClassScheme,
    /// Description of the merge that produced this scheme, if any.
    pub merged: Option<String>,
    /// False only for an auto-mode merge that failed the epsilon gate and
    /// was reverted.
    pub accepted: bool,
    pub metrics: ModelMetrics,
    pub fold_accuracy: Vec<f64>,
    pub confusion: ConfusionMatrix,
    pub mean_confidence: f64,
    pub lc_point_fraction: f64,
    pub confident_joint: ConfidentJoint,
    /// Per-point confidence scores under this step's posteriors.
    pub confidence_scores: Vec<f64>,
    /// Observed labels mapped into this step's scheme.
    pub labels: Vec<usize>,
}

pub struct RefineOutcome {
    pub steps: Vec<RefineStep>,
    pub final_scheme: ClassScheme,
    /// Out-of-fold posteriors for the final scheme, before pruning.
    pub final_posteriors: PosteriorMatrix,
    /// Observed labels mapped into the final scheme.
    pub final_labels: Vec<usize>,
    pub final_lc: Vec<bool>,
    /// Points removed from the training side by pruning.
    pub pruned_removed: usize,
    pub pruned_metrics: ModelMetrics,
    pub pruned_fold_accuracy: Vec<f64>,
    pub pruned_confusion: ConfusionMatrix,
    pub pruned_posteriors: PosteriorMatrix,
}

struct StepEval {
    metrics: ModelMetrics,
    fold_accuracy: Vec<f64>,
    confusion: ConfusionMatrix,
    posteriors: PosteriorMatrix,
    labels: Vec<usize>,
    joint: ConfidentJoint,
    lc: Vec<bool>,
    cs: Vec<f64>,
    mean_cs: f64,
}

#[allow(clippy::too_many_arguments)]
fn evaluate_scheme(
    x: &FeatureMatrix,
    index: &DatasetIndex,
    original_labels: &[usize],
    scheme: &ClassScheme,
    kind: ModelKind,
    zoo: &ZooConfig,
    curation: &CurationParams,
    seed: u64,
) -> Result<StepEval> {
    let labels = apply_map(original_labels, &scheme.map);
    let outcome =
        lopo_evaluate(x, &labels, index, scheme.n_classes(), kind, zoo, seed, None)?;
    let tau = class_thresholds(&outcome.posteriors, &labels, curation.threshold_mode)?;
    let joint = confident_joint(&outcome.posteriors, &labels, &tau)?;
    let lc = flag_low_confidence(&outcome.posteriors, &labels, &tau)?;
    let cs = confidence_scores(&outcome.posteriors)?;
    let mean_cs = cs.iter().sum::<f64>() / cs.len() as f64;
    let confusion =
        confusion_matrix(&outcome.posteriors.predicted_labels(), &labels, scheme.n_classes())?;
    Ok(StepEval {
        metrics: outcome.pooled,
        fold_accuracy: outcome.fold_accuracy,
        confusion,
        posteriors: outcome.posteriors,
        labels,
        joint,
        lc,
        cs,
        mean_cs,
    })
}

fn lc_fraction(lc: &[bool]) -> f64 {
    lc.iter().filter(|&&f| f).count() as f64 / lc.len() as f64
}

/// Adjacent pair (c, c+1) with the highest Chat[c][c+1]/n_c +
/// Chat[c+1][c]/n_{c+1}; ties break toward the pair with lower mean CS.
fn pick_merge_pair(
    joint: &ConfidentJoint,
    labels: &[usize],
    cs: &[f64],
) -> Result<usize> {
    let c = joint.n_classes;
    if c < 3 {
        return Err(Error::Input("no adjacent pair to merge below 3 classes".into()));
    }
    let mut label_counts = vec![0usize; c];
    for &y in labels {
        label_counts[y] += 1;
    }
    let pair_mean_cs = |a: usize| -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (k, &y) in labels.iter().enumerate() {
            if y == a || y == a + 1 {
                sum += cs[k];
                n += 1;
            }
        }
        if n == 0 {
            f64::INFINITY
        } else {
            sum / n as f64
        }
    };
    let mut best = 0usize;
    let mut best_score = f64::NEG_INFINITY;
    let mut best_cs = f64::INFINITY;
    for a in 0..c - 1 {
        let na = label_counts[a].max(1) as f64;
        let nb = label_counts[a + 1].max(1) as f64;
        let score = joint.get(a, a + 1) as f64 / na + joint.get(a + 1, a) as f64 / nb;
        let tie = (score - best_score).abs() <= 1e-12;
        if score > best_score + 1e-12 || (tie && pair_mean_cs(a) < best_cs) {
            best = a;
            best_score = score;
            best_cs = pair_mean_cs(a);
        }
    }
    Ok(best)
}

/// Run the refinement loop from a starting scheme.
pub fn refine_iteratively(
    x: &FeatureMatrix,
    index: &DatasetIndex,
    start: &ClassScheme,
    kind: ModelKind,
    zoo: &ZooConfig,
    params: &RefineParams,
    seed: u64,
) -> Result<RefineOutcome> {
    start.validate()?;
    params.curation.validate()?;
    if start.n_classes() < 2 {
        return Err(Error::Input("refinement needs at least 2 classes".into()));
    }
    let original_labels = index.point_labels();

    let mut steps: Vec<RefineStep> = Vec::new();
    let mut scheme = start.clone();
    let mut eval = evaluate_scheme(
        x,
        index,
        &original_labels,
        &scheme,
        kind,
        zoo,
        &params.curation,
        derive_seed(seed, &[stage::REFINE, 0]),
    )?;
    steps.push(RefineStep {
        scheme: scheme.clone(),
        merged: None,
        accepted: true,
        metrics: eval.metrics.clone(),
        fold_accuracy: eval.fold_accuracy.clone(),
        confusion: eval.confusion.clone(),
        mean_confidence: eval.mean_cs,
        lc_point_fraction: lc_fraction(&eval.lc),
        confident_joint: eval.joint.clone(),
        confidence_scores: eval.cs.clone(),
        labels: eval.labels.clone(),
    });

    match &params.policy {
        MergePolicy::Auto { epsilon_pp } => {
            let mut step_idx = 1u64;
            while scheme.n_classes() > 2 {
                let cs = confidence_scores(&eval.posteriors)?;
                let pair = pick_merge_pair(&eval.joint, &eval.labels, &cs)?;
                let group = MergeGroup::of(&[pair, pair + 1]);
                let merged_desc = format!(
                    "{} + {}",
                    scheme.names[pair], scheme.names[pair + 1]
                );
                let candidate = merge_classes(&scheme, &[group])?;
                let cand_eval = evaluate_scheme(
                    x,
                    index,
                    &original_labels,
                    &candidate,
                    kind,
                    zoo,
                    &params.curation,
                    derive_seed(seed, &[stage::REFINE, step_idx]),
                )?;
                let gain = cand_eval.metrics.accuracy - eval.metrics.accuracy;
                let accepted = gain >= epsilon_pp / 100.0;
                steps.push(RefineStep {
                    scheme: candidate.clone(),
                    merged: Some(merged_desc),
                    accepted,
                    metrics: cand_eval.metrics.clone(),
                    fold_accuracy: cand_eval.fold_accuracy.clone(),
                    confusion: cand_eval.confusion.clone(),
                    mean_confidence: cand_eval.mean_cs,
                    lc_point_fraction: lc_fraction(&cand_eval.lc),
                    confident_joint: cand_eval.joint.clone(),
                    confidence_scores: cand_eval.cs.clone(),
                    labels: cand_eval.labels.clone(),
                });
                if !accepted {
                    break;
                }
                scheme = candidate;
                eval = cand_eval;
                step_idx += 1;
            }
        }
        MergePolicy::Schedule { steps: schedule } => {
            for (k, groups) in schedule.iter().enumerate() {
                let merged_desc = groups
                    .iter()
                    .map(|g| {
                        g.classes
                            .iter()
                            .map(|&i| scheme.names[i].as_str())
                            .collect::<Vec<_>>()
                            .join("+")
                    })
                    .collect::<Vec<_>>()
                    .join(", ");
                scheme = merge_classes(&scheme, groups)?;
                eval = evaluate_scheme(
                    x,
                    index,
                    &original_labels,
                    &scheme,
                    kind,
                    zoo,
                    &params.curation,
                    derive_seed(seed, &[stage::REFINE, k as u64 + 1]),
                )?;
                steps.push(RefineStep {
                    scheme: scheme.clone(),
                    merged: Some(merged_desc),
                    accepted: true,
                    metrics: eval.metrics.clone(),
                    fold_accuracy: eval.fold_accuracy.clone(),
                    confusion: eval.confusion.clone(),
                    mean_confidence: eval.mean_cs,
                    lc_point_fraction: lc_fraction(&eval.lc),
                    confident_joint: eval.joint.clone(),
                    confidence_scores: eval.cs.clone(),
                    labels: eval.labels.clone(),
                });
            }
        }
    }

    // Prune LC points from the training side and retrain once. Test sides
    // stay untouched.
    let all_rows: Vec<usize> = (0..x.n_rows).collect();
    prune_training_set(&all_rows, &eval.lc, &eval.labels, &scheme.names)?;
    let train_mask: Vec<bool> = eval.lc.iter().map(|&f| !f).collect();
    let pruned = lopo_evaluate(
        x,
        &eval.labels,
        index,
        scheme.n_classes(),
        kind,
        zoo,
        derive_seed(seed, &[stage::REFINE, 0xff]),
        Some(&train_mask),
    )?;
    let pruned_removed = eval.lc.iter().filter(|&&f| f).count();
    let pruned_confusion = confusion_matrix(
        &pruned.posteriors.predicted_labels(),
        &eval.labels,
        scheme.n_classes(),
    )?;

    Ok(RefineOutcome {
        steps,
        final_scheme: scheme,
        final_posteriors: eval.posteriors,
        final_labels: eval.labels,
        final_lc: eval.lc,
        pruned_removed,
        pruned_metrics: pruned.pooled,
        pruned_fold_accuracy: pruned.fold_accuracy,
        pruned_confusion,
        pruned_posteriors: pruned.posteriors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_pair_rule_normalizes_by_class_size() {
        // Chat[0][1]=4 of n_0=40 (0.1 each way) vs Chat[1][2]=6 of n_1=20.
        let joint = ConfidentJoint {
            n_classes: 3,
            counts: vec![30, 4, 0, 4, 10, 6, 0, 6, 8],
            thresholds: vec![0.5; 3],
        };
        let mut labels = vec![0usize; 40];
        labels.extend(vec![1usize; 20]);
        labels.extend(vec![2usize; 10]);
        let cs = vec![0.5; 70];
        // pair (0,1): 4/40 + 4/20 = 0.3; pair (1,2): 6/20 + 6/10 = 0.9.
        assert_eq!(pick_merge_pair(&joint, &labels, &cs).unwrap(), 1);
    }

    #[test]
    fn merge_pair_tie_breaks_on_lower_mean_cs() {
        let joint = ConfidentJoint {
            n_classes: 3,
            counts: vec![10, 2, 0, 2, 10, 2, 0, 2, 10],
            thresholds: vec![0.5; 3],
        };
        let labels = vec![0, 0, 1, 1, 2, 2];
        // Symmetric confusion is equal for both pairs; class 2 points carry
        // higher confidence, so the (0,1) pair has the lower mean CS.
        let cs = vec![0.5, 0.5, 0.5, 0.5, 0.95, 0.95];
        assert_eq!(pick_merge_pair(&joint, &labels, &cs).unwrap(), 0);
    }
}
