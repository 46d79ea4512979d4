//! Feature attribution: Monte-Carlo permutation Shapley values and
//! permutation importance.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::pooled_metrics;
use crate::features::FeatureMatrix;
use crate::model::TrainedModel;
use crate::rng::{derive_seed, rng_for, stage};

/// Output scale for model attributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributionScale {
    /// Class posterior probability. Defined even when posteriors saturate.
    #[default]
    Probability,
    /// ln(p / (1-p)) with clamping away from 0 and 1.
    LogOdds,
}

/// Per-feature Shapley attributions for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub scale: AttributionScale,
    /// Mean model output over the background set.
    pub baseline: f64,
    /// Model output at the explained instance.
    pub prediction: f64,
    pub values: Vec<f64>,
    /// Monte-Carlo standard error per feature.
    pub std_errors: Vec<f64>,
}

impl AttributionResult {
    /// f(x) - baseline minus the attribution total; near zero by the
    /// efficiency property.
    pub fn efficiency_gap(&self) -> f64 {
        self.prediction - self.baseline - self.values.iter().sum::<f64>()
    }
}

/// Monte-Carlo permutation-sampling Shapley values for a scalar function.
///
/// "Feature absent" means replaced by values from a background row; rows
/// cycle with the sample index so the efficiency identity holds against the
/// exact background mean whenever the sample count is a multiple of the
/// background size. Deterministic given the seed.
pub fn shapley_values(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    background: &FeatureMatrix,
    instance: &[f64],
    n_permutations: usize,
    seed: u64,
) -> Result<AttributionResult> {
    let d = instance.len();
    if background.n_rows == 0 {
        return Err(Error::Input("empty background set".into()));
    }
    if background.n_cols != d {
        return Err(Error::Input(format!(
            "instance has {d} features but background has {}",
            background.n_cols
        )));
    }
    if n_permutations == 0 {
        return Err(Error::Parameter("need at least one permutation sample".into()));
    }

    let contributions: Vec<Vec<f64>> = (0..n_permutations)
        .into_par_iter()
        .map(|m| {
            let mut rng = rng_for(derive_seed(seed, &[stage::ATTRIB, m as u64]), &[]);
            let mut perm: Vec<usize> = (0..d).collect();
            perm.shuffle(&mut rng);
            let mut x = background.row(m % background.n_rows).to_vec();
            let mut prev = f(&x);
            let mut contrib = vec![0.0; d];
            for &j in &perm {
                x[j] = instance[j];
                let cur = f(&x);
                contrib[j] = cur - prev;
                prev = cur;
            }
            contrib
        })
        .collect();

    let n = n_permutations as f64;
    let mut values = vec![0.0; d];
    let mut sq = vec![0.0; d];
    for contrib in &contributions {
        for j in 0..d {
            values[j] += contrib[j];
            sq[j] += contrib[j] * contrib[j];
        }
    }
    for v in &mut values {
        *v /= n;
    }
    let std_errors: Vec<f64> = (0..d)
        .map(|j| {
            let var = (sq[j] / n - values[j] * values[j]).max(0.0);
            (var / n).sqrt()
        })
        .collect();

    let baseline =
        background.rows().map(|row| f(row)).sum::<f64>() / background.n_rows as f64;
    Ok(AttributionResult {
        scale: AttributionScale::Probability,
        baseline,
        prediction: f(instance),
        values,
        std_errors,
    })
}

/// Class-score function for a trained model on the chosen scale.
pub fn class_score_fn<'a>(
    model: &'a TrainedModel,
    class: usize,
    scale: AttributionScale,
) -> impl Fn(&[f64]) -> f64 + Sync + 'a {
    move |row: &[f64]| {
        let x = FeatureMatrix {
            names: Vec::new(),
            n_rows: 1,
            n_cols: row.len(),
            data: row.to_vec(),
        };
        let p = model.predict_proba(&x).expect("dimension checked by caller").row(0)[class];
        match scale {
            AttributionScale::Probability => p,
            AttributionScale::LogOdds => {
                let p = p.clamp(1e-9, 1.0 - 1e-9);
                (p / (1.0 - p)).ln()
            }
        }
    }
}

/// Shapley attributions of a model's class score for one instance.
pub fn shapley_for_model(
    model: &TrainedModel,
    background: &FeatureMatrix,
    instance: &[f64],
    class: usize,
    scale: AttributionScale,
    n_permutations: usize,
    seed: u64,
) -> Result<AttributionResult> {
    if class >= model.n_classes {
        return Err(Error::Input(format!(
            "class {class} out of range for {} classes",
            model.n_classes
        )));
    }
    if instance.len() != model.standardizer.dimension() {
        return Err(Error::Input(format!(
            "instance has {} features but the model expects {}",
            instance.len(),
            model.standardizer.dimension()
        )));
    }
    let f = class_score_fn(model, class, scale);
    let mut result = shapley_values(&f, background, instance, n_permutations, seed)?;
    result.scale = scale;
    Ok(result)
}

/// Importance metric for permutation importance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMetric {
    Accuracy,
    MeanAuc,
}

/// Metric drop after shuffling one feature column, averaged over repeats.
pub fn permutation_importance(
    model: &TrainedModel,
    x: &FeatureMatrix,
    labels: &[usize],
    metric: ImportanceMetric,
    n_repeats: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_repeats == 0 {
        return Err(Error::Parameter("need at least one repeat".into()));
    }
    let evaluate = |m: &FeatureMatrix| -> Result<f64> {
        let p = model.predict_proba(m)?;
        match metric {
            ImportanceMetric::Accuracy => {
                let preds = p.predicted_labels();
                Ok(preds.iter().zip(labels).filter(|(a, b)| a == b).count() as f64
                    / labels.len() as f64)
            }
            ImportanceMetric::MeanAuc => Ok(pooled_metrics(&p, labels)?.mean_auc()),
        }
    };
    let base = evaluate(x)?;

    let importances: Result<Vec<f64>> = (0..x.n_cols)
        .into_par_iter()
        .map(|j| {
            let mut total = 0.0;
            for r in 0..n_repeats {
                let mut rng =
                    rng_for(derive_seed(seed, &[stage::ATTRIB, j as u64, r as u64]), &[]);
                let mut col: Vec<f64> = (0..x.n_rows).map(|i| x.row(i)[j]).collect();
                col.shuffle(&mut rng);
                let mut shuffled = x.clone();
                for i in 0..x.n_rows {
                    shuffled.data[i * x.n_cols + j] = col[i];
                }
                total += base - evaluate(&shuffled)?;
            }
            Ok(total / n_repeats as f64)
        })
        .collect();
    importances
}
