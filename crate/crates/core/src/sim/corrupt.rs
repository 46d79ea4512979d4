//! Margin-level label corruption with a reversible log.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_for, stage};

use super::DatasetManifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Flip to a neighboring class, clamped at the roster edges.
    Adjacent,
    /// Flip to any other class uniformly.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionEntry {
    pub margin_id: String,
    pub true_label: usize,
    pub corrupted_label: usize,
}

/// Ground-truth record of every injected label flip.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorruptionLog {
    pub entries: Vec<CorruptionEntry>,
}

impl CorruptionLog {
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.entries {
            if e.true_label == e.corrupted_label {
                return Err(Error::Input(format!(
                    "corruption entry for {} does not change the label",
                    e.margin_id
                )));
            }
            if !seen.insert(&e.margin_id) {
                return Err(Error::Input(format!("duplicate margin {} in corruption log", e.margin_id)));
            }
        }
        Ok(())
    }

    pub fn corrupted_margin_ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.margin_id.as_str()).collect()
    }
}

/// Flip the observed label of `round(rate * N)` margins.
///
/// Point labels follow automatically because they are read from the margin.
pub fn inject_label_noise(
    manifest: &DatasetManifest,
    rate: f64,
    mode: NoiseMode,
    seed: u64,
) -> Result<(DatasetManifest, CorruptionLog)> {
    if !(rate.is_finite() && (0.0..1.0).contains(&rate)) {
        return Err(Error::Parameter(format!("corruption rate must be in [0,1), got {rate}")));
    }
    let n_classes = manifest.n_classes();
    if n_classes < 2 {
        return Err(Error::Input("cannot corrupt labels with a single class".into()));
    }

    let n_margins = manifest.n_margins();
    let n_flips = (rate * n_margins as f64).round() as usize;
    let mut out = manifest.clone();
    let mut log = CorruptionLog::default();
    if n_flips == 0 {
        return Ok((out, log));
    }

    let mut rng = rng_for(seed, &[stage::CORRUPT]);
    let mut picked: Vec<usize> = sample(&mut rng, n_margins, n_flips).into_vec();
    picked.sort_unstable();

    let mut margin_refs: Vec<&mut super::MarginRecord> = out
        .patients
        .iter_mut()
        .flat_map(|p| p.margins.iter_mut())
        .collect();

    for &m in &picked {
        let margin = &mut margin_refs[m];
        let original = margin.observed_label;
        let flipped = match mode {
            NoiseMode::Adjacent => {
                if original == 0 {
                    1
                } else if original == n_classes - 1 {
                    n_classes - 2
                } else if rng.gen::<bool>() {
                    original + 1
                } else {
                    original - 1
                }
            }
            NoiseMode::Uniform => {
                let k = rng.gen_range(0..n_classes - 1);
                if k >= original {
                    k + 1
                } else {
                    k
                }
            }
        };
        margin.observed_label = flipped;
        log.entries.push(CorruptionEntry {
            margin_id: margin.id.clone(),
            true_label: original,
            corrupted_label: flipped,
        });
    }
    log.validate()?;
    Ok((out, log))
}

/// Apply a corruption log in reverse, restoring the pre-corruption manifest.
pub fn undo_label_noise(manifest: &DatasetManifest, log: &CorruptionLog) -> Result<DatasetManifest> {
    let mut out = manifest.clone();
    for entry in &log.entries {
        let margin = out
            .patients
            .iter_mut()
            .flat_map(|p| p.margins.iter_mut())
            .find(|m| m.id == entry.margin_id)
            .ok_or_else(|| Error::Input(format!("margin {} not found in manifest", entry.margin_id)))?;
        if margin.observed_label != entry.corrupted_label {
            return Err(Error::Input(format!(
                "margin {} carries label {} but the log expected {}",
                entry.margin_id, margin.observed_label, entry.corrupted_label
            )));
        }
        margin.observed_label = entry.true_label;
    }
    Ok(out)
}
