//! Serializable curation report: thresholds, confident joint, per-point and
//! per-margin flags, scheme history, per-step metrics.

use serde::{Deserialize, Serialize};

use super::refine::RefineStep;
use super::{ConfidentJoint, MarginStatus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFlag {
    pub point_id: String,
    pub confidence: f64,
    pub low_confidence: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    pub margin_id: String,
    pub mcs: f64,
    pub lc_fraction: f64,
    pub status: MarginStatus,
}

/// Metrics for one step of the refinement trajectory, in emission order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub scheme: Vec<String>,
    pub n_classes: usize,
    pub merged: Option<String>,
    pub accepted: bool,
    pub accuracy: f64,
    pub mean_auc: f64,
    pub mean_confidence: f64,
    pub lc_point_fraction: f64,
    pub confident_joint: ConfidentJoint,
}

impl StepSummary {
    pub fn from_step(step: &RefineStep) -> StepSummary {
        StepSummary {
            scheme: step.scheme.names.clone(),
            n_classes: step.scheme.n_classes(),
            merged: step.merged.clone(),
            accepted: step.accepted,
            accuracy: step.metrics.accuracy,
            mean_auc: step.metrics.mean_auc(),
            mean_confidence: step.mean_confidence,
            lc_point_fraction: step.lc_point_fraction,
            confident_joint: step.confident_joint.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationReport {
    /// Names of the classes the thresholds and joint refer to.
    pub class_names: Vec<String>,
    pub thresholds: Vec<f64>,
    pub confident_joint: ConfidentJoint,
    pub points: Vec<PointFlag>,
    pub margins: Vec<MarginReport>,
    /// The scheme trajectory, filled by the refinement stage.
    #[serde(default)]
    pub scheme_history: Vec<StepSummary>,
    /// Final scheme after refinement (names plus original-to-final map).
    #[serde(default)]
    pub final_scheme: Option<crate::curate::ClassScheme>,
    /// Per-point LC flags in the final scheme, aligned with `points`.
    #[serde(default)]
    pub final_low_confidence: Option<Vec<bool>>,
    /// Pruned-retrain accuracy, when the refinement stage has run.
    #[serde(default)]
    pub pruned_accuracy: Option<f64>,
    #[serde(default)]
    pub pruned_removed: Option<usize>,
}
