//! Synthetic FLIm dataset simulator.
//!
//! Generates seeded fluorescence-decay waveforms with class-conditional
//! bi-exponential parameters, groups them into a patients → margins → points
//! hierarchy, and injects margin-level label corruption with a full log so
//! every downstream curation claim can be checked against known ground truth.

mod confound;
mod corrupt;
mod dataset;
mod waveform;

pub use confound::{
    apply_blood, apply_confounder, blend_toward, ConfounderContext, ConfounderKind, ConfounderSpec,
};
pub use corrupt::{inject_label_noise, undo_label_noise, CorruptionEntry, CorruptionLog, NoiseMode};
pub use dataset::{synth_dataset, ConfounderConfig, PointWaveforms, SimConfig, SynthDataset};
pub use waveform::{conv_truncated, gaussian_irf, synth_waveform};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// Small ordered-ladder config for tests: adjacent classes one sd apart.
    pub(crate) fn ladder_config(patients: usize, n_classes: usize) -> SimConfig {
        let class_names: Vec<String> = (0..n_classes).map(|c| format!("class-{c}")).collect();
        let class_models = (0..n_classes)
            .map(|c| ClassDecayModel {
                class_index: c,
                lifetimes: (1.0, 6.0),
                fractions: PerBand::uniform(FractionDist { mean: 0.15 + 0.1 * c as f64, sd: 0.1 }),
                amplitude_mean: 1.0,
            })
            .collect();
        SimConfig {
            patients,
            margins_per_patient: (2, 4),
            points_per_margin: (5, 9),
            class_names,
            class_models,
            class_margin_counts: None,
            acquisition: AcquisitionSpec::default(),
            margin_jitter_sd: 0.0,
            band_correlation: 0.8,
            amplitude_jitter_sd: 0.05,
            confounders: Vec::new(),
        }
    }
}

/// Spectral band identifier. Identities are labels, not wavelengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Band {
    #[serde(rename = "band-A")]
    A,
    #[serde(rename = "band-B")]
    B,
}

impl Band {
    pub const ALL: [Band; 2] = [Band::A, Band::B];

    pub fn name(self) -> &'static str {
        match self {
            Band::A => "band-A",
            Band::B => "band-B",
        }
    }

    /// Column prefix used in feature files.
    pub fn prefix(self) -> &'static str {
        match self {
            Band::A => "bandA",
            Band::B => "bandB",
        }
    }
}

/// One value per spectral band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerBand<T> {
    pub band_a: T,
    pub band_b: T,
}

impl<T> PerBand<T> {
    pub fn get(&self, band: Band) -> &T {
        match band {
            Band::A => &self.band_a,
            Band::B => &self.band_b,
        }
    }
}

impl<T: Copy> PerBand<T> {
    pub fn uniform(value: T) -> Self {
        Self { band_a: value, band_b: value }
    }
}

/// A digitized fluorescence decay for one point in one spectral band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    /// Amplitude samples, arbitrary units. Nonnegative before noise.
    pub samples: Vec<f64>,
    /// Sample period in nanoseconds.
    pub dt: f64,
    pub band: Band,
}

impl Waveform {
    pub const MIN_SAMPLES: usize = 64;

    pub fn validate(&self) -> Result<()> {
        if self.samples.len() < Self::MIN_SAMPLES {
            return Err(Error::Input(format!(
                "waveform has {} samples, need at least {}",
                self.samples.len(),
                Self::MIN_SAMPLES
            )));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Parameter(format!("dt must be positive, got {}", self.dt)));
        }
        if self.samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("waveform contains non-finite samples".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn peak_index(&self) -> usize {
        self.samples
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

/// Fraction distribution of the fast decay component for one band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FractionDist {
    pub mean: f64,
    pub sd: f64,
}

/// Class-conditional bi-exponential decay parameters.
///
/// The mixing fraction weights the fast component `tau1`, so a larger
/// fraction gives a shorter effective lifetime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDecayModel {
    pub class_index: usize,
    /// (tau1, tau2) in ns with 0 < tau1 < tau2.
    pub lifetimes: (f64, f64),
    pub fractions: PerBand<FractionDist>,
    pub amplitude_mean: f64,
}

impl ClassDecayModel {
    pub fn validate(&self) -> Result<()> {
        let (t1, t2) = self.lifetimes;
        if !(t1.is_finite() && t2.is_finite() && t1 > 0.0 && t1 < t2) {
            return Err(Error::Parameter(format!(
                "lifetimes must satisfy 0 < tau1 < tau2, got ({t1}, {t2})"
            )));
        }
        for band in Band::ALL {
            let f = self.fractions.get(band);
            if !(f.mean.is_finite() && (0.0..=1.0).contains(&f.mean)) {
                return Err(Error::Parameter(format!(
                    "fraction mean for {} must be in [0,1], got {}",
                    band.name(),
                    f.mean
                )));
            }
            if !(f.sd.is_finite() && f.sd >= 0.0) {
                return Err(Error::Parameter(format!(
                    "fraction sd for {} must be nonnegative, got {}",
                    band.name(),
                    f.sd
                )));
            }
        }
        if !(self.amplitude_mean.is_finite() && self.amplitude_mean > 0.0) {
            return Err(Error::Parameter(format!(
                "amplitude_mean must be positive, got {}",
                self.amplitude_mean
            )));
        }
        Ok(())
    }
}

/// Digitizer and excitation settings shared by every waveform in a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionSpec {
    /// Sample period in ns (2.5 GS/s digitizer -> 0.4 ns).
    pub dt_ns: f64,
    /// Record length in ns.
    pub record_ns: f64,
    /// Gaussian IRF full width at half maximum, ns.
    pub irf_fwhm_ns: f64,
    /// Peak-amplitude signal-to-noise ratio in dB; `inf` disables noise.
    pub snr_db: f64,
}

impl Default for AcquisitionSpec {
    fn default() -> Self {
        Self { dt_ns: 0.4, record_ns: 80.0, irf_fwhm_ns: 1.0, snr_db: 40.0 }
    }
}

impl AcquisitionSpec {
    pub fn n_samples(&self) -> usize {
        (self.record_ns / self.dt_ns).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_ns > 0.0 && self.dt_ns.is_finite()) {
            return Err(Error::Parameter(format!("dt_ns must be positive, got {}", self.dt_ns)));
        }
        if !(self.record_ns > 0.0 && self.record_ns.is_finite()) {
            return Err(Error::Parameter(format!(
                "record_ns must be positive, got {}",
                self.record_ns
            )));
        }
        if self.n_samples() < Waveform::MIN_SAMPLES {
            return Err(Error::Parameter(format!(
                "record of {} ns at dt {} ns yields {} samples, need at least {}",
                self.record_ns,
                self.dt_ns,
                self.n_samples(),
                Waveform::MIN_SAMPLES
            )));
        }
        if !(self.irf_fwhm_ns > 0.0 && self.irf_fwhm_ns.is_finite()) {
            return Err(Error::Parameter(format!(
                "irf_fwhm_ns must be positive, got {}",
                self.irf_fwhm_ns
            )));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::Parameter(format!("snr_db must be finite or +inf, got {}", self.snr_db)));
        }
        Ok(())
    }
}

/// Applied-confounder tag stored in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedConfounder {
    pub kind: ConfounderKind,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub id: String,
    /// True when a margin confounder was applied to this point's waveforms.
    pub confounded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginRecord {
    pub id: String,
    /// Pre-corruption class label.
    pub true_label: usize,
    /// Label after any injected corruption; every point inherits it.
    pub observed_label: usize,
    pub confounders: Vec<AppliedConfounder>,
    pub points: Vec<PointRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub id: String,
    pub margins: Vec<MarginRecord>,
}

/// Patients → margins → points, with observed and true labels.
///
/// Point labels are not stored: a point's label *is* its margin's observed
/// label, which keeps the margin-to-point inheritance rule true by
/// construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub class_names: Vec<String>,
    pub acquisition: AcquisitionSpec,
    pub patients: Vec<PatientRecord>,
}

impl DatasetManifest {
    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn n_margins(&self) -> usize {
        self.patients.iter().map(|p| p.margins.len()).sum()
    }

    pub fn n_points(&self) -> usize {
        self.patients
            .iter()
            .flat_map(|p| &p.margins)
            .map(|m| m.points.len())
            .sum()
    }

    pub fn margins(&self) -> impl Iterator<Item = &MarginRecord> {
        self.patients.iter().flat_map(|p| p.margins.iter())
    }
}

/// Flat integer views over a manifest for numeric pipelines.
#[derive(Debug, Clone)]
pub struct DatasetIndex {
    pub n_classes: usize,
    pub patient_ids: Vec<String>,
    pub margin_ids: Vec<String>,
    pub point_ids: Vec<String>,
    /// Margin index for every point, in manifest order.
    pub point_margin: Vec<usize>,
    /// Patient index for every point.
    pub point_patient: Vec<usize>,
    /// Patient index for every margin.
    pub margin_patient: Vec<usize>,
    pub margin_observed: Vec<usize>,
    pub margin_true: Vec<usize>,
}

impl DatasetIndex {
    pub fn from_manifest(manifest: &DatasetManifest) -> Self {
        let mut idx = DatasetIndex {
            n_classes: manifest.n_classes(),
            patient_ids: Vec::new(),
            margin_ids: Vec::new(),
            point_ids: Vec::new(),
            point_margin: Vec::new(),
            point_patient: Vec::new(),
            margin_patient: Vec::new(),
            margin_observed: Vec::new(),
            margin_true: Vec::new(),
        };
        for (p_i, patient) in manifest.patients.iter().enumerate() {
            idx.patient_ids.push(patient.id.clone());
            for margin in &patient.margins {
                let m_i = idx.margin_ids.len();
                idx.margin_ids.push(margin.id.clone());
                idx.margin_patient.push(p_i);
                idx.margin_observed.push(margin.observed_label);
                idx.margin_true.push(margin.true_label);
                for point in &margin.points {
                    idx.point_ids.push(point.id.clone());
                    idx.point_margin.push(m_i);
                    idx.point_patient.push(p_i);
                }
            }
        }
        idx
    }

    pub fn n_points(&self) -> usize {
        self.point_ids.len()
    }

    pub fn n_margins(&self) -> usize {
        self.margin_ids.len()
    }

    pub fn n_patients(&self) -> usize {
        self.patient_ids.len()
    }

    /// Observed label per point (margin inheritance).
    pub fn point_labels(&self) -> Vec<usize> {
        self.point_margin.iter().map(|&m| self.margin_observed[m]).collect()
    }

    /// Pre-corruption label per point.
    pub fn point_true_labels(&self) -> Vec<usize> {
        self.point_margin.iter().map(|&m| self.margin_true[m]).collect()
    }
}
