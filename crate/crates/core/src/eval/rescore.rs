//! Simulated re-scoring study: relabel flagged margins from the corruption
//! log and compare prediction agreement before and after.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::curate::MarginStatus;
use crate::error::{Error, Result};
use crate::rng::{rng_for, stage};
use crate::sim::{CorruptionLog, DatasetIndex};

/// The simulated pathologist.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum RelabelPolicy {
    /// Restore the true (pre-corruption) label.
    Oracle,
    /// Restore the true label with probability `reliability`, otherwise
    /// return the original observed label.
    NoisyOracle { reliability: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescoreGroupReport {
    pub margin_ids: Vec<String>,
    pub n_margins: usize,
    pub n_points: usize,
    /// Margins in the group that appear in the corruption log.
    pub n_corrupted: usize,
    pub n_relabeled: usize,
    pub accuracy_before: f64,
    pub accuracy_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescoreReport {
    pub issue: RescoreGroupReport,
    pub control: RescoreGroupReport,
    #[serde(default)]
    pub warning: Option<String>,
}

/// Run the re-scoring study over the issue and control margin groups.
///
/// `predictions` are point predictions in the evaluation scheme;
/// `scheme_map` carries original class indices into that scheme. Agreement
/// with margin labels is computed before and after relabeling.
pub fn rescoring_study(
    index: &DatasetIndex,
    statuses: &[MarginStatus],
    log: &CorruptionLog,
    predictions: &[usize],
    scheme_map: &[usize],
    policy: RelabelPolicy,
    seed: u64,
) -> Result<RescoreReport> {
    if statuses.len() != index.n_margins() {
        return Err(Error::Input(format!(
            "{} statuses for {} margins",
            statuses.len(),
            index.n_margins()
        )));
    }
    if predictions.len() != index.n_points() {
        return Err(Error::Input(format!(
            "{} predictions for {} points",
            predictions.len(),
            index.n_points()
        )));
    }
    if let RelabelPolicy::NoisyOracle { reliability } = policy {
        if !(0.0..=1.0).contains(&reliability) {
            return Err(Error::Parameter(format!(
                "relabeler reliability must be in [0,1], got {reliability}"
            )));
        }
    }

    let corrupted: std::collections::BTreeSet<&str> =
        log.entries.iter().map(|e| e.margin_id.as_str()).collect();
    let mut rng = rng_for(seed, &[stage::RESCORE]);

    let mut group_report = |status: MarginStatus| -> RescoreGroupReport {
        let margins: Vec<usize> =
            (0..index.n_margins()).filter(|&m| statuses[m] == status).collect();
        let mut relabeled: Vec<usize> = index.margin_observed.clone();
        let mut n_relabeled = 0usize;
        for &m in &margins {
            let revised = match policy {
                RelabelPolicy::Oracle => index.margin_true[m],
                RelabelPolicy::NoisyOracle { reliability } => {
                    if rng.gen::<f64>() < reliability {
                        index.margin_true[m]
                    } else {
                        index.margin_observed[m]
                    }
                }
            };
            if revised != relabeled[m] {
                n_relabeled += 1;
            }
            relabeled[m] = revised;
        }

        let mut n_points = 0usize;
        let mut before = 0usize;
        let mut after = 0usize;
        let in_group: Vec<bool> = (0..index.n_margins())
            .map(|m| statuses[m] == status)
            .collect();
        for (k, &m) in index.point_margin.iter().enumerate() {
            if !in_group[m] {
                continue;
            }
            n_points += 1;
            if predictions[k] == scheme_map[index.margin_observed[m]] {
                before += 1;
            }
            if predictions[k] == scheme_map[relabeled[m]] {
                after += 1;
            }
        }
        let div = n_points.max(1) as f64;
        RescoreGroupReport {
            margin_ids: margins.iter().map(|&m| index.margin_ids[m].clone()).collect(),
            n_margins: margins.len(),
            n_points,
            n_corrupted: margins
                .iter()
                .filter(|&&m| corrupted.contains(index.margin_ids[m].as_str()))
                .count(),
            n_relabeled,
            accuracy_before: before as f64 / div,
            accuracy_after: after as f64 / div,
        }
    };

    let issue = group_report(MarginStatus::Issue);
    let control = group_report(MarginStatus::Control);
    let warning = if issue.n_margins == 0 {
        Some("no margins were flagged as label issues".to_string())
    } else {
        None
    };
    Ok(RescoreReport { issue, control, warning })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{inject_label_noise, synth_dataset, DatasetIndex, NoiseMode};

    fn setup() -> (DatasetIndex, CorruptionLog) {
        let mut config = crate::sim::test_support::ladder_config(4, 3);
        config.points_per_margin = (4, 4);
        let ds = synth_dataset(&config, 31).unwrap();
        let (corrupted, log) = inject_label_noise(&ds.manifest, 0.3, NoiseMode::Adjacent, 7).unwrap();
        (DatasetIndex::from_manifest(&corrupted), log)
    }

    #[test]
    fn oracle_relabeling_restores_agreement_with_truth_aligned_predictions() {
        let (index, log) = setup();
        // Predictions equal the TRUE labels: before-accuracy on corrupted
        // margins is 0, after-accuracy 1.
        let predictions = index.point_true_labels();
        let statuses: Vec<MarginStatus> = index
            .margin_ids
            .iter()
            .map(|id| {
                if log.entries.iter().any(|e| &e.margin_id == id) {
                    MarginStatus::Issue
                } else {
                    MarginStatus::Control
                }
            })
            .collect();
        let map: Vec<usize> = (0..3).collect();
        let report = rescoring_study(
            &index,
            &statuses,
            &log,
            &predictions,
            &map,
            RelabelPolicy::Oracle,
            5,
        )
        .unwrap();
        assert!(report.issue.accuracy_after >= report.issue.accuracy_before);
        assert_eq!(report.issue.accuracy_before, 0.0);
        assert_eq!(report.issue.accuracy_after, 1.0);
        // Control margins were never corrupted, so the oracle changes nothing.
        assert_eq!(report.control.accuracy_before, report.control.accuracy_after);
        assert_eq!(report.issue.n_corrupted, report.issue.n_margins);
    }

    #[test]
    fn zero_reliability_relabeler_changes_nothing() {
        let (index, log) = setup();
        let predictions = index.point_labels();
        let statuses = vec![MarginStatus::Issue; index.n_margins()];
        let map: Vec<usize> = (0..3).collect();
        let report = rescoring_study(
            &index,
            &statuses,
            &log,
            &predictions,
            &map,
            RelabelPolicy::NoisyOracle { reliability: 0.0 },
            5,
        )
        .unwrap();
        assert_eq!(report.issue.accuracy_before, report.issue.accuracy_after);
        assert_eq!(report.issue.n_relabeled, 0);
    }

    #[test]
    fn empty_issue_group_reports_a_warning() {
        let (index, log) = setup();
        let predictions = index.point_labels();
        let statuses = vec![MarginStatus::Control; index.n_margins()];
        let map: Vec<usize> = (0..3).collect();
        let report = rescoring_study(
            &index,
            &statuses,
            &log,
            &predictions,
            &map,
            RelabelPolicy::Oracle,
            5,
        )
        .unwrap();
        assert!(report.warning.is_some());
        assert_eq!(report.issue.n_margins, 0);
    }
}
