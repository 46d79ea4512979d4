//! Confident-learning engine: confidence scores, class thresholds, the
//! confident joint, low-confidence flags, margin-level label-issue flags,
//! and training-set pruning.

mod refine;
mod report;
mod scheme;

pub use refine::{refine_iteratively, MergePolicy, RefineOutcome, RefineParams, RefineStep};
pub use report::{CurationReport, MarginReport, PointFlag, StepSummary};
pub use scheme::{apply_map, merge_classes, ClassScheme, MergeGroup};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PosteriorMatrix;

/// How the per-class threshold averages predicted probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// tau_j = mean of p(j) over points observed-labeled j.
    #[default]
    SelfConfidence,
    /// tau_j = mean of p(j) over all points.
    AllPoints,
}

/// Eq. 9 cutoffs plus the threshold-averaging convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurationParams {
    pub threshold_mode: ThresholdMode,
    /// LC fraction above which a margin is a label issue.
    pub issue_threshold: f64,
    /// LC fraction below which a margin is a control.
    pub control_threshold: f64,
}

impl Default for CurationParams {
    fn default() -> Self {
        Self {
            threshold_mode: ThresholdMode::SelfConfidence,
            issue_threshold: 0.70,
            control_threshold: 0.30,
        }
    }
}

impl CurationParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.control_threshold && self.control_threshold < self.issue_threshold
            && self.issue_threshold <= 1.0)
        {
            return Err(Error::Config(format!(
                "curation thresholds must satisfy 0 <= control < issue <= 1, got {} / {}",
                self.control_threshold, self.issue_threshold
            )));
        }
        Ok(())
    }
}

/// CS_j: the highest predicted class probability per point.
pub fn confidence_scores(posteriors: &PosteriorMatrix) -> Result<Vec<f64>> {
    posteriors.validate()?;
    Ok(posteriors
        .rows()
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect())
}

/// MCS_i: mean confidence score over each margin's points.
pub fn margin_confidence(
    cs: &[f64],
    point_margin: &[usize],
    n_margins: usize,
) -> Result<Vec<f64>> {
    if cs.len() != point_margin.len() {
        return Err(Error::Input("confidence and margin-grouping lengths differ".into()));
    }
    let mut sums = vec![0.0; n_margins];
    let mut counts = vec![0usize; n_margins];
    for (&score, &m) in cs.iter().zip(point_margin) {
        if m >= n_margins {
            return Err(Error::Input(format!("margin index {m} out of range")));
        }
        sums[m] += score;
        counts[m] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Input(format!("margin {empty} has no points")));
    }
    Ok(sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect())
}

/// Per-class confidence thresholds tau_j.
pub fn class_thresholds(
    posteriors: &PosteriorMatrix,
    labels: &[usize],
    mode: ThresholdMode,
) -> Result<Vec<f64>> {
    if posteriors.n_rows != labels.len() {
        return Err(Error::Input("posterior and label lengths differ".into()));
    }
    let c = posteriors.n_classes;
    let mut sums = vec![0.0; c];
    let mut counts = vec![0usize; c];
    match mode {
        ThresholdMode::SelfConfidence => {
            for (row, &y) in posteriors.rows().zip(labels) {
                if y >= c {
                    return Err(Error::Input(format!("label {y} out of range")));
                }
                sums[y] += row[y];
                counts[y] += 1;
            }
        }
        ThresholdMode::AllPoints => {
            for row in posteriors.rows() {
                for j in 0..c {
                    sums[j] += row[j];
                    counts[j] += 1;
                }
            }
        }
    }
    if let Some(class) = counts.iter().position(|&n| n == 0) {
        return Err(Error::ThresholdUndefined { class, name: format!("class {class}") });
    }
    Ok(sums.iter().zip(&counts).map(|(s, &n)| s / n as f64).collect())
}

/// The confident joint and the thresholds it was built with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidentJoint {
    pub n_classes: usize,
    /// Row = observed label, column = confidently predicted label.
    pub counts: Vec<usize>,
    pub thresholds: Vec<f64>,
}

impl ConfidentJoint {
    pub fn get(&self, observed: usize, predicted: usize) -> usize {
        self.counts[observed * self.n_classes + predicted]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn off_diagonal_total(&self) -> usize {
        let mut sum = 0;
        for i in 0..self.n_classes {
            for j in 0..self.n_classes {
                if i != j {
                    sum += self.get(i, j);
                }
            }
        }
        sum
    }
}

/// C-hat[i][j] = #{k : y_k = i, argmax p_k = j, CS_k >= tau_j}, inclusive.
pub fn confident_joint(
    posteriors: &PosteriorMatrix,
    labels: &[usize],
    thresholds: &[f64],
) -> Result<ConfidentJoint> {
    let c = posteriors.n_classes;
    if thresholds.len() != c {
        return Err(Error::Input(format!("{} thresholds for {c} classes", thresholds.len())));
    }
    if posteriors.n_rows != labels.len() {
        return Err(Error::Input("posterior and label lengths differ".into()));
    }
    let predicted = posteriors.predicted_labels();
    let mut counts = vec![0usize; c * c];
    for (k, (row, &y)) in posteriors.rows().zip(labels).enumerate() {
        let y_hat = predicted[k];
        let cs = row[y_hat];
        if cs >= thresholds[y_hat] {
            counts[y * c + y_hat] += 1;
        }
    }
    Ok(ConfidentJoint { n_classes: c, counts, thresholds: thresholds.to_vec() })
}

/// LC_k = 1 iff the point's confident prediction disagrees with its observed
/// label: argmax != y and CS >= tau_{argmax}. Equals membership in the
/// off-diagonal cells of the confident joint.
pub fn flag_low_confidence(
    posteriors: &PosteriorMatrix,
    labels: &[usize],
    thresholds: &[f64],
) -> Result<Vec<bool>> {
    let c = posteriors.n_classes;
    if thresholds.len() != c {
        return Err(Error::Input(format!("{} thresholds for {c} classes", thresholds.len())));
    }
    if posteriors.n_rows != labels.len() {
        return Err(Error::Input("posterior and label lengths differ".into()));
    }
    let predicted = posteriors.predicted_labels();
    Ok(posteriors
        .rows()
        .zip(labels)
        .enumerate()
        .map(|(k, (row, &y))| {
            let y_hat = predicted[k];
            y_hat != y && row[y_hat] >= thresholds[y_hat]
        })
        .collect())
}

/// Eq. 9 margin status from the proportion of low-confidence points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginStatus {
    Issue,
    Control,
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginFlags {
    pub lc_fraction: Vec<f64>,
    pub status: Vec<MarginStatus>,
}

/// Flag margins by LC fraction: above the issue threshold (strictly) they
/// are label issues, below the control threshold (strictly) controls, and
/// otherwise indeterminate.
pub fn flag_label_issues(
    lc: &[bool],
    point_margin: &[usize],
    n_margins: usize,
    params: &CurationParams,
) -> Result<MarginFlags> {
    params.validate()?;
    if lc.len() != point_margin.len() {
        return Err(Error::Input("flag and margin-grouping lengths differ".into()));
    }
    let mut flagged = vec![0usize; n_margins];
    let mut counts = vec![0usize; n_margins];
    for (&is_lc, &m) in lc.iter().zip(point_margin) {
        if m >= n_margins {
            return Err(Error::Input(format!("margin index {m} out of range")));
        }
        counts[m] += 1;
        if is_lc {
            flagged[m] += 1;
        }
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Input(format!("margin {empty} has no points")));
    }
    let lc_fraction: Vec<f64> =
        flagged.iter().zip(&counts).map(|(&f, &c)| f as f64 / c as f64).collect();
    let status = lc_fraction
        .iter()
        .map(|&frac| {
            if frac > params.issue_threshold {
                MarginStatus::Issue
            } else if frac < params.control_threshold {
                MarginStatus::Control
            } else {
                MarginStatus::Indeterminate
            }
        })
        .collect();
    Ok(MarginFlags { lc_fraction, status })
}

/// Remove LC-flagged rows from a training split. Test rows are never
/// touched; errors if pruning would empty a class that had training points.
pub fn prune_training_set(
    train_rows: &[usize],
    lc: &[bool],
    labels: &[usize],
    class_names: &[String],
) -> Result<Vec<usize>> {
    let kept: Vec<usize> = train_rows.iter().copied().filter(|&r| !lc[r]).collect();
    let n_classes = class_names.len();
    let mut before = vec![false; n_classes];
    let mut after = vec![false; n_classes];
    for &r in train_rows {
        before[labels[r]] = true;
    }
    for &r in &kept {
        after[labels[r]] = true;
    }
    for c in 0..n_classes {
        if before[c] && !after[c] {
            return Err(Error::Training(format!(
                "pruning would remove every training point of class '{}'",
                class_names[c]
            )));
        }
    }
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn posterior(rows: &[&[f64]]) -> PosteriorMatrix {
        let c = rows[0].len();
        PosteriorMatrix::new(rows.len(), c, rows.iter().flat_map(|r| r.iter().copied()).collect())
            .unwrap()
    }

    #[test]
    fn confidence_score_basics() {
        let p = posterior(&[&[0.25, 0.25, 0.25, 0.25], &[1.0, 0.0, 0.0, 0.0], &[0.1, 0.7, 0.2, 0.0]]);
        let cs = confidence_scores(&p).unwrap();
        assert_eq!(cs, vec![0.25, 1.0, 0.7]);
    }

    #[test]
    fn margin_confidence_means() {
        let cs = [0.9, 0.7, 0.8, 0.5];
        let mcs = margin_confidence(&cs, &[0, 0, 0, 1], 2).unwrap();
        assert!((mcs[0] - 0.8).abs() < 1e-12);
        assert!((mcs[1] - 0.5).abs() < 1e-12);
        // Single-point margin is its own mean; empty margin errors.
        assert!(margin_confidence(&cs, &[0, 0, 0, 0], 2).is_err());
    }

    #[test]
    fn thresholds_hand_example() {
        let p = posterior(&[&[0.9, 0.1], &[0.4, 0.6], &[0.2, 0.8]]);
        let tau = class_thresholds(&p, &[0, 0, 1], ThresholdMode::SelfConfidence).unwrap();
        assert!((tau[0] - 0.65).abs() < 1e-12);
        assert!((tau[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn thresholds_special_cases() {
        // All one-hot correct -> tau = 1; uniform -> tau = 1/C.
        let p = posterior(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let tau = class_thresholds(&p, &[0, 1], ThresholdMode::SelfConfidence).unwrap();
        assert_eq!(tau, vec![1.0, 1.0]);
        let p = posterior(&[&[0.5, 0.5], &[0.5, 0.5]]);
        let tau = class_thresholds(&p, &[0, 1], ThresholdMode::SelfConfidence).unwrap();
        assert_eq!(tau, vec![0.5, 0.5]);
    }

    #[test]
    fn threshold_undefined_for_unlabeled_class() {
        let p = posterior(&[&[0.9, 0.1], &[0.8, 0.2]]);
        let err = class_thresholds(&p, &[0, 0], ThresholdMode::SelfConfidence).unwrap_err();
        assert!(matches!(err, Error::ThresholdUndefined { class: 1, .. }));
    }

    #[test]
    fn all_points_threshold_mode() {
        let p = posterior(&[&[0.9, 0.1], &[0.4, 0.6], &[0.2, 0.8]]);
        let tau = class_thresholds(&p, &[0, 0, 1], ThresholdMode::AllPoints).unwrap();
        assert!((tau[0] - 0.5).abs() < 1e-12);
        assert!((tau[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn confident_joint_first_hand_example() {
        // Middle point predicts class 1 with CS 0.6 < tau_1 = 0.8, so it is
        // not counted anywhere.
        let p = posterior(&[&[0.9, 0.1], &[0.4, 0.6], &[0.2, 0.8]]);
        let labels = [0, 0, 1];
        let tau = class_thresholds(&p, &labels, ThresholdMode::SelfConfidence).unwrap();
        let joint = confident_joint(&p, &labels, &tau).unwrap();
        assert_eq!(joint.counts, vec![1, 0, 0, 1]);
        let lc = flag_low_confidence(&p, &labels, &tau).unwrap();
        assert_eq!(lc, vec![false, false, false]);
    }

    #[test]
    fn confident_joint_second_hand_example() {
        // First point confidently predicts the other class: off-diagonal and
        // LC-flagged. Third point sits exactly at tau (inclusive >=).
        let p = posterior(&[&[0.2, 0.8], &[0.9, 0.1], &[0.3, 0.7]]);
        let labels = [0, 0, 1];
        let tau = class_thresholds(&p, &labels, ThresholdMode::SelfConfidence).unwrap();
        assert!((tau[0] - 0.55).abs() < 1e-12);
        assert!((tau[1] - 0.7).abs() < 1e-12);
        let joint = confident_joint(&p, &labels, &tau).unwrap();
        assert_eq!(joint.counts, vec![1, 1, 0, 1]);
        let lc = flag_low_confidence(&p, &labels, &tau).unwrap();
        assert_eq!(lc, vec![true, false, false]);
    }

    #[test]
    fn one_hot_posteriors_fill_the_diagonal() {
        let p = posterior(&[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
        let labels = [0, 0, 1];
        let tau = class_thresholds(&p, &labels, ThresholdMode::SelfConfidence).unwrap();
        let joint = confident_joint(&p, &labels, &tau).unwrap();
        assert_eq!(joint.counts, vec![2, 0, 0, 1]);
        assert_eq!(joint.total(), 3);
        assert!(flag_low_confidence(&p, &labels, &tau).unwrap().iter().all(|&f| !f));
    }

    #[test]
    fn lc_flags_match_off_diagonal_membership() {
        // Random-ish posteriors: flags must count exactly the off-diagonal.
        let p = posterior(&[
            &[0.5, 0.3, 0.2],
            &[0.1, 0.8, 0.1],
            &[0.3, 0.3, 0.4],
            &[0.7, 0.2, 0.1],
            &[0.05, 0.15, 0.8],
            &[0.4, 0.5, 0.1],
        ]);
        let labels = [0, 0, 2, 1, 2, 1];
        let tau = class_thresholds(&p, &labels, ThresholdMode::SelfConfidence).unwrap();
        let joint = confident_joint(&p, &labels, &tau).unwrap();
        let lc = flag_low_confidence(&p, &labels, &tau).unwrap();
        assert_eq!(lc.iter().filter(|&&f| f).count(), joint.off_diagonal_total());
    }

    #[test]
    fn margin_status_thresholds() {
        let params = CurationParams::default();
        // 0.859 -> issue, 0.2 -> control, 0.5 -> indeterminate.
        let mut lc = vec![true; 6161];
        lc.extend(vec![false; 7176 - 6161]);
        lc.extend([true, true].iter().chain([false; 8].iter()));
        lc.extend([true; 5].iter().chain([false; 5].iter()));
        let mut grouping = vec![0usize; 7176];
        grouping.extend(vec![1usize; 10]);
        grouping.extend(vec![2usize; 10]);
        let flags = flag_label_issues(&lc, &grouping, 3, &params).unwrap();
        assert_eq!(flags.status[0], MarginStatus::Issue);
        assert!((flags.lc_fraction[0] - 6161.0 / 7176.0).abs() < 1e-12);
        assert_eq!(flags.status[1], MarginStatus::Control);
        assert_eq!(flags.status[2], MarginStatus::Indeterminate);
    }

    #[test]
    fn boundary_fractions_are_indeterminate() {
        // Exactly 0.70 and 0.30 satisfy neither strict inequality.
        let params = CurationParams::default();
        let lc = [true, true, true, true, true, true, true, false, false, false,
                  true, true, true, false, false, false, false, false, false, false];
        let grouping: Vec<usize> = (0..20).map(|i| i / 10).collect();
        let flags = flag_label_issues(&lc, &grouping, 2, &params).unwrap();
        assert_eq!(flags.status, vec![MarginStatus::Indeterminate, MarginStatus::Indeterminate]);
    }

    #[test]
    fn pruning_counts_and_identity() {
        let names = vec!["a".to_string(), "b".to_string()];
        let labels = vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let train: Vec<usize> = (0..10).collect();
        let mut lc = vec![false; 10];
        lc[1] = true;
        lc[6] = true;
        lc[7] = true;
        let kept = prune_training_set(&train, &lc, &labels, &names).unwrap();
        assert_eq!(kept.len(), 7);
        let kept = prune_training_set(&train, &vec![false; 10], &labels, &names).unwrap();
        assert_eq!(kept, train);
    }

    #[test]
    fn pruning_cannot_empty_a_class() {
        let names = vec!["a".to_string(), "b".to_string()];
        let labels = vec![0, 0, 1];
        let train = vec![0, 1, 2];
        let lc = vec![false, false, true];
        let err = prune_training_set(&train, &lc, &labels, &names).unwrap_err();
        match err {
            Error::Training(msg) => assert!(msg.contains('b'), "message: {msg}"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn flags_depend_only_on_argmax_cs_and_tau() {
        // Recompute flags from (y_hat, CS, tau) alone and compare.
        let p = posterior(&[
            &[0.5, 0.3, 0.2],
            &[0.1, 0.8, 0.1],
            &[0.3, 0.3, 0.4],
            &[0.7, 0.2, 0.1],
            &[0.05, 0.15, 0.8],
        ]);
        let labels = [1, 0, 2, 0, 1];
        let tau = class_thresholds(&p, &labels, ThresholdMode::SelfConfidence).unwrap();
        let lc = flag_low_confidence(&p, &labels, &tau).unwrap();
        let y_hat = p.predicted_labels();
        let cs = confidence_scores(&p).unwrap();
        let reconstructed: Vec<bool> = (0..labels.len())
            .map(|k| y_hat[k] != labels[k] && cs[k] >= tau[y_hat[k]])
            .collect();
        assert_eq!(lc, reconstructed);
    }
}
