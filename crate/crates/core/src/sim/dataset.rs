//! Seeded dataset generation: roster layout, per-point decay parameters,
//! waveform synthesis, confounder application.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_for, stage};

use super::{
    apply_blood, blend_toward, synth_waveform, AcquisitionSpec, AppliedConfounder, Band,
    ClassDecayModel, ConfounderKind, ConfounderSpec, DatasetManifest, FractionDist, MarginRecord,
    PatientRecord, PerBand, PointRecord, Waveform,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfounderConfig {
    #[serde(flatten)]
    pub spec: ConfounderSpec,
    /// Fraction of margins the confounder is assigned to.
    pub margin_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub patients: usize,
    /// Inclusive range used when `class_margin_counts` is not given.
    pub margins_per_patient: (usize, usize),
    /// Inclusive range of points per margin.
    pub points_per_margin: (usize, usize),
    pub class_names: Vec<String>,
    pub class_models: Vec<ClassDecayModel>,
    /// Exact number of margins per class; overrides `margins_per_patient`.
    #[serde(default)]
    pub class_margin_counts: Option<Vec<usize>>,
    #[serde(default)]
    pub acquisition: AcquisitionSpec,
    /// Margin-level shift of the fraction mean, in units of the class sd.
    #[serde(default)]
    pub margin_jitter_sd: f64,
    /// Correlation between the two bands' per-point fraction draws.
    #[serde(default = "default_band_correlation")]
    pub band_correlation: f64,
    /// Lognormal sd of the per-point amplitude jitter.
    #[serde(default)]
    pub amplitude_jitter_sd: f64,
    #[serde(default)]
    pub confounders: Vec<ConfounderConfig>,
}

fn default_band_correlation() -> f64 {
    0.8
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patients < 2 {
            return Err(Error::Config(format!("sim.patients: need at least 2, got {}", self.patients)));
        }
        let c = self.class_names.len();
        if c < 2 {
            return Err(Error::Config("sim.class_names: need at least 2 classes".into()));
        }
        if self.class_models.len() != c {
            return Err(Error::Config(format!(
                "sim.class_models: {} models for {} classes",
                self.class_models.len(),
                c
            )));
        }
        for (i, m) in self.class_models.iter().enumerate() {
            if m.class_index != i {
                return Err(Error::Config(format!(
                    "sim.class_models[{i}].class_index: expected {i}, got {}",
                    m.class_index
                )));
            }
            m.validate().map_err(|e| Error::Config(format!("sim.class_models[{i}]: {e}")))?;
        }
        if let Some(counts) = &self.class_margin_counts {
            if counts.len() != c {
                return Err(Error::Config(format!(
                    "sim.class_margin_counts: {} entries for {} classes",
                    counts.len(),
                    c
                )));
            }
            if counts.iter().any(|&n| n == 0) {
                return Err(Error::Config(
                    "sim.class_margin_counts: every class needs at least one margin".into(),
                ));
            }
        } else if self.margins_per_patient.0 == 0
            || self.margins_per_patient.0 > self.margins_per_patient.1
        {
            return Err(Error::Config(format!(
                "sim.margins_per_patient: invalid range {:?}",
                self.margins_per_patient
            )));
        }
        if self.points_per_margin.0 == 0 || self.points_per_margin.0 > self.points_per_margin.1 {
            return Err(Error::Config(format!(
                "sim.points_per_margin: invalid range {:?}",
                self.points_per_margin
            )));
        }
        if !(-1.0..=1.0).contains(&self.band_correlation) {
            return Err(Error::Config(format!(
                "sim.band_correlation: must be in [-1,1], got {}",
                self.band_correlation
            )));
        }
        self.acquisition.validate().map_err(|e| Error::Config(format!("sim.acquisition: {e}")))?;
        for (i, cc) in self.confounders.iter().enumerate() {
            cc.spec
                .validate()
                .map_err(|e| Error::Config(format!("sim.confounders[{i}]: {e}")))?;
            if !(0.0..=1.0).contains(&cc.margin_fraction) {
                return Err(Error::Config(format!(
                    "sim.confounders[{i}].margin_fraction: must be in [0,1]"
                )));
            }
        }
        Ok(())
    }
}

/// Waveforms for one point, aligned with manifest point order.
#[derive(Debug, Clone, PartialEq)]
pub struct PointWaveforms {
    pub band_a: Waveform,
    pub band_b: Waveform,
}

impl PointWaveforms {
    pub fn get(&self, band: Band) -> &Waveform {
        match band {
            Band::A => &self.band_a,
            Band::B => &self.band_b,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub manifest: DatasetManifest,
    /// One entry per point, in manifest traversal order.
    pub waveforms: Vec<PointWaveforms>,
}

struct PointPlan {
    model: ClassDecayModel,
    blood: Option<f64>,
    seed_a: u64,
    seed_b: u64,
}

/// Generate a complete synthetic dataset: manifest plus raw waveforms.
pub fn synth_dataset(config: &SimConfig, seed: u64) -> Result<SynthDataset> {
    config.validate()?;
    let n_classes = config.class_names.len();
    let mut rng = rng_for(seed, &[stage::SYNTH]);

    // Margin class roster per patient.
    let per_patient_classes: Vec<Vec<usize>> = if let Some(counts) = &config.class_margin_counts {
        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); config.patients];
        // Deal each class over a fresh patient rotation so classes span
        // as many distinct patients as possible.
        for (class, &count) in counts.iter().enumerate() {
            let mut order: Vec<usize> = (0..config.patients).collect();
            order.shuffle(&mut rng);
            for k in 0..count {
                buckets[order[k % config.patients]].push(class);
            }
        }
        buckets
    } else {
        let (lo, hi) = config.margins_per_patient;
        let mut buckets: Vec<Vec<usize>> = (0..config.patients)
            .map(|_| {
                let m = rng.gen_range(lo..=hi);
                (0..m).map(|_| rng.gen_range(0..n_classes)).collect()
            })
            .collect();
        ensure_every_class_present(&mut buckets, n_classes)?;
        buckets
    };

    // Confounder assignment over the flat margin list.
    let n_margins: usize = per_patient_classes.iter().map(|v| v.len()).sum();
    let mut margin_confounder: Vec<Option<ConfounderSpec>> = vec![None; n_margins];
    {
        let mut free: Vec<usize> = (0..n_margins).collect();
        for cc in &config.confounders {
            let want = (cc.margin_fraction * n_margins as f64).round() as usize;
            let take = want.min(free.len());
            if take == 0 {
                continue;
            }
            let chosen = sample(&mut rng, free.len(), take);
            let mut chosen: Vec<usize> = chosen.iter().map(|i| free[i]).collect();
            chosen.sort_unstable();
            for &m in &chosen {
                margin_confounder[m] = Some(cc.spec);
            }
            free.retain(|m| margin_confounder[*m].is_none());
        }
    }

    // Structure pass: ids, labels, per-point decay parameters.
    let mut manifest = DatasetManifest {
        seed,
        class_names: config.class_names.clone(),
        acquisition: config.acquisition,
        patients: Vec::with_capacity(config.patients),
    };
    let mut plans: Vec<PointPlan> = Vec::new();
    let mut flat_margin = 0usize;
    let (p_lo, p_hi) = config.points_per_margin;

    for (p_i, classes) in per_patient_classes.iter().enumerate() {
        let patient_id = format!("P{:03}", p_i + 1);
        let mut patient = PatientRecord { id: patient_id.clone(), margins: Vec::new() };
        for (m_i, &class) in classes.iter().enumerate() {
            let margin_id = format!("{}-M{:02}", patient_id, m_i + 1);
            let spec = margin_confounder[flat_margin];
            let n_points = rng.gen_range(p_lo..=p_hi);
            let n_confounded = spec
                .map(|s| (s.affected_fraction * n_points as f64).round() as usize)
                .unwrap_or(0)
                .min(n_points);
            let mut confounded_points = vec![false; n_points];
            if n_confounded > 0 {
                for i in sample(&mut rng, n_points, n_confounded) {
                    confounded_points[i] = true;
                }
            }
            let margin_shift: f64 = if config.margin_jitter_sd > 0.0 {
                config.margin_jitter_sd * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };

            let base = &config.class_models[class];
            let neighbor_for = |dir: i32| -> &ClassDecayModel {
                let target = (class as i64 + dir as i64).clamp(0, n_classes as i64 - 1) as usize;
                &config.class_models[target]
            };

            let mut points = Vec::with_capacity(n_points);
            for k in 0..n_points {
                let point_index = plans.len();
                let point_id = format!("{}-{:04}", margin_id, k + 1);
                let is_confounded = confounded_points[k];

                // Grey matter shifts the decay parameters before the draw.
                let effective: ClassDecayModel = match spec {
                    Some(s) if is_confounded && s.kind == ConfounderKind::GreyMatter => {
                        blend_toward(base, neighbor_for(s.direction), s.magnitude)?
                    }
                    _ => base.clone(),
                };

                // Correlated per-band fraction draws around the class mean.
                let rho = config.band_correlation;
                let u: f64 = rng.sample(StandardNormal);
                let mut frac = |band: Band| -> f64 {
                    let d = effective.fractions.get(band);
                    let eps: f64 = rng.sample(StandardNormal);
                    let z = rho * u + (1.0 - rho * rho).sqrt() * eps;
                    (d.mean + d.sd * (z + margin_shift)).clamp(0.01, 0.99)
                };
                let fa = frac(Band::A);
                let fb = frac(Band::B);
                let amplitude = if config.amplitude_jitter_sd > 0.0 {
                    let g: f64 = rng.sample(StandardNormal);
                    effective.amplitude_mean * (config.amplitude_jitter_sd * g).exp()
                } else {
                    effective.amplitude_mean
                };

                plans.push(PointPlan {
                    model: ClassDecayModel {
                        class_index: class,
                        lifetimes: effective.lifetimes,
                        fractions: PerBand {
                            band_a: FractionDist { mean: fa, sd: 0.0 },
                            band_b: FractionDist { mean: fb, sd: 0.0 },
                        },
                        amplitude_mean: amplitude,
                    },
                    blood: match spec {
                        Some(s) if is_confounded && s.kind == ConfounderKind::Blood => {
                            Some(s.magnitude)
                        }
                        _ => None,
                    },
                    seed_a: derive_seed(seed, &[stage::SYNTH, point_index as u64, 0]),
                    seed_b: derive_seed(seed, &[stage::SYNTH, point_index as u64, 1]),
                });
                points.push(PointRecord { id: point_id, confounded: is_confounded });
            }

            patient.margins.push(MarginRecord {
                id: margin_id,
                true_label: class,
                observed_label: class,
                confounders: spec
                    .map(|s| vec![AppliedConfounder { kind: s.kind, magnitude: s.magnitude }])
                    .unwrap_or_default(),
                points,
            });
            flat_margin += 1;
        }
        manifest.patients.push(patient);
    }

    // Synthesis pass; points are independent given their seeds.
    let acq = config.acquisition;
    let waveforms: Result<Vec<PointWaveforms>> = plans
        .par_iter()
        .map(|plan| {
            let mut a = synth_waveform(&plan.model, Band::A, &acq, plan.seed_a)?;
            let mut b = synth_waveform(&plan.model, Band::B, &acq, plan.seed_b)?;
            if let Some(magnitude) = plan.blood {
                a = apply_blood(&a, magnitude, acq.snr_db, plan.seed_a)?;
                b = apply_blood(&b, magnitude, acq.snr_db, plan.seed_b)?;
            }
            Ok(PointWaveforms { band_a: a, band_b: b })
        })
        .collect();

    Ok(SynthDataset { manifest, waveforms: waveforms? })
}

fn ensure_every_class_present(buckets: &mut [Vec<usize>], n_classes: usize) -> Result<()> {
    let total: usize = buckets.iter().map(|b| b.len()).sum();
    if total < n_classes {
        return Err(Error::Config(format!(
            "{total} margins cannot cover {n_classes} classes"
        )));
    }
    loop {
        let mut counts = vec![0usize; n_classes];
        for b in buckets.iter() {
            for &c in b {
                counts[c] += 1;
            }
        }
        let missing = match counts.iter().position(|&n| n == 0) {
            Some(c) => c,
            None => return Ok(()),
        };
        // Take one margin from the most populous class, deterministically.
        let donor = counts.iter().enumerate().max_by_key(|(_, &n)| n).map(|(c, _)| c).unwrap();
        'outer: for b in buckets.iter_mut() {
            for slot in b.iter_mut() {
                if *slot == donor {
                    *slot = missing;
                    break 'outer;
                }
            }
        }
    }
}
