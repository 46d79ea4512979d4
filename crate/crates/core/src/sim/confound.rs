//! Acquisition and tissue confounders.
//!
//! Grey matter acts on the decay parameters: the point's class model is
//! blended toward the neighboring class before synthesis. Blood acts on the
//! acquired waveform: it attenuates the signal and adds noise relative to
//! the nominal acquisition SNR.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_for;

use super::{AcquisitionSpec, Band, ClassDecayModel, FractionDist, PerBand, Waveform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfounderKind {
    GreyMatter,
    Blood,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfounderSpec {
    pub kind: ConfounderKind,
    /// Dimensionless strength in [0,1].
    pub magnitude: f64,
    /// Fraction of a margin's points the confounder touches.
    pub affected_fraction: f64,
    /// Grey matter blends toward class `c + direction` (clamped at the
    /// roster edges); ignored for blood.
    #[serde(default = "default_direction")]
    pub direction: i32,
}

fn default_direction() -> i32 {
    -1
}

impl ConfounderSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.magnitude.is_finite() && (0.0..=1.0).contains(&self.magnitude)) {
            return Err(Error::Parameter(format!(
                "confounder magnitude must be in [0,1], got {}",
                self.magnitude
            )));
        }
        if !(self.affected_fraction.is_finite() && (0.0..=1.0).contains(&self.affected_fraction)) {
            return Err(Error::Parameter(format!(
                "affected_fraction must be in [0,1], got {}",
                self.affected_fraction
            )));
        }
        if self.direction == 0 {
            return Err(Error::Parameter("grey matter direction must be +1 or -1".into()));
        }
        Ok(())
    }
}

/// Linear blend of decay parameters toward a neighboring class model.
/// `magnitude` 0 returns `base`, 1 returns `neighbor`.
pub fn blend_toward(
    base: &ClassDecayModel,
    neighbor: &ClassDecayModel,
    magnitude: f64,
) -> Result<ClassDecayModel> {
    if !(magnitude.is_finite() && (0.0..=1.0).contains(&magnitude)) {
        return Err(Error::Parameter(format!("blend magnitude must be in [0,1], got {magnitude}")));
    }
    let lerp = |a: f64, b: f64| a + magnitude * (b - a);
    let blend_band = |a: &FractionDist, b: &FractionDist| FractionDist {
        mean: lerp(a.mean, b.mean),
        sd: lerp(a.sd, b.sd),
    };
    Ok(ClassDecayModel {
        class_index: base.class_index,
        lifetimes: (lerp(base.lifetimes.0, neighbor.lifetimes.0), lerp(base.lifetimes.1, neighbor.lifetimes.1)),
        fractions: PerBand {
            band_a: blend_band(base.fractions.get(Band::A), neighbor.fractions.get(Band::A)),
            band_b: blend_band(base.fractions.get(Band::B), neighbor.fractions.get(Band::B)),
        },
        amplitude_mean: lerp(base.amplitude_mean, neighbor.amplitude_mean),
    })
}

/// Inputs needed to re-synthesize a waveform under a parameter-level
/// confounder.
pub struct ConfounderContext<'a> {
    pub model: &'a ClassDecayModel,
    /// Neighboring-class model; required for grey matter.
    pub neighbor: Option<&'a ClassDecayModel>,
    pub band: Band,
    pub acquisition: &'a AcquisitionSpec,
}

/// Apply a confounder to one waveform.
///
/// Blood scales the samples by `1 - 0.8*magnitude` and then adds zero-mean
/// Gaussian noise with sd `magnitude * peak / snr_linear`, degrading the
/// effective SNR in proportion to the magnitude. Grey matter re-synthesizes
/// the waveform (same seed) from the model blended toward the neighbor.
pub fn apply_confounder(
    waveform: &Waveform,
    spec: &ConfounderSpec,
    ctx: &ConfounderContext<'_>,
    seed: u64,
) -> Result<Waveform> {
    spec.validate()?;
    match spec.kind {
        ConfounderKind::Blood => apply_blood(waveform, spec.magnitude, ctx.acquisition.snr_db, seed),
        ConfounderKind::GreyMatter => {
            let neighbor = ctx.neighbor.ok_or_else(|| {
                Error::Parameter("grey matter confounder requires a neighbor-class model".into())
            })?;
            let blended = blend_toward(ctx.model, neighbor, spec.magnitude)?;
            super::synth_waveform(&blended, ctx.band, ctx.acquisition, seed)
        }
    }
}

/// Blood-in-field transform: attenuation plus SNR degradation.
///
/// An infinite reference SNR yields the pure attenuation, which is what the
/// "peak amplitude scales by 1 - 0.8*magnitude before noise" contract checks.
pub fn apply_blood(waveform: &Waveform, magnitude: f64, ref_snr_db: f64, seed: u64) -> Result<Waveform> {
    if !(magnitude.is_finite() && (0.0..=1.0).contains(&magnitude)) {
        return Err(Error::Parameter(format!("blood magnitude must be in [0,1], got {magnitude}")));
    }
    let scale = 1.0 - 0.8 * magnitude;
    let mut out = waveform.clone();
    for v in &mut out.samples {
        *v *= scale;
    }
    if magnitude > 0.0 && ref_snr_db.is_finite() {
        let sigma = magnitude * out.peak() / 10f64.powf(ref_snr_db / 20.0);
        if sigma > 0.0 {
            let mut rng = rng_for(seed, &[crate::rng::stage::CONFOUND]);
            for v in &mut out.samples {
                *v += sigma * rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::synth_waveform;

    fn model(idx: usize, tau1: f64, tau2: f64, frac: f64) -> ClassDecayModel {
        ClassDecayModel {
            class_index: idx,
            lifetimes: (tau1, tau2),
            fractions: PerBand::uniform(FractionDist { mean: frac, sd: 0.0 }),
            amplitude_mean: 1.0,
        }
    }

    fn noiseless() -> AcquisitionSpec {
        AcquisitionSpec { snr_db: f64::INFINITY, ..Default::default() }
    }

    #[test]
    fn magnitude_zero_is_identity() {
        let base = model(2, 1.5, 5.0, 0.4);
        let acq = noiseless();
        let w = synth_waveform(&base, Band::A, &acq, 3).unwrap();
        for kind in [ConfounderKind::Blood, ConfounderKind::GreyMatter] {
            let neighbor = model(1, 2.0, 6.0, 0.3);
            let spec =
                ConfounderSpec { kind, magnitude: 0.0, affected_fraction: 1.0, direction: -1 };
            let ctx = ConfounderContext {
                model: &base,
                neighbor: Some(&neighbor),
                band: Band::A,
                acquisition: &acq,
            };
            let out = apply_confounder(&w, &spec, &ctx, 3).unwrap();
            assert_eq!(out.samples, w.samples, "{kind:?} at magnitude 0 changed the waveform");
        }
    }

    #[test]
    fn blood_full_magnitude_scales_peak_to_one_fifth() {
        let base = model(0, 1.0, 6.0, 0.5);
        let acq = noiseless();
        let w = synth_waveform(&base, Band::A, &acq, 8).unwrap();
        let out = apply_blood(&w, 1.0, f64::INFINITY, 8).unwrap();
        assert!((out.peak() - 0.2 * w.peak()).abs() < 1e-12);
    }

    #[test]
    fn blood_with_finite_reference_snr_adds_noise() {
        let base = model(0, 1.0, 6.0, 0.5);
        let acq = noiseless();
        let w = synth_waveform(&base, Band::A, &acq, 8).unwrap();
        let out = apply_blood(&w, 0.5, 40.0, 8).unwrap();
        let rescaled_diff: Vec<f64> =
            w.samples.iter().zip(&out.samples).map(|(a, b)| b - 0.6 * a).collect();
        assert!(rescaled_diff.iter().any(|d| d.abs() > 1e-9), "expected added noise");
        // Deterministic given seed.
        let again = apply_blood(&w, 0.5, 40.0, 8).unwrap();
        assert_eq!(out.samples, again.samples);
    }

    #[test]
    fn grey_matter_full_magnitude_matches_neighbor_synthesis() {
        let base = model(3, 1.2, 4.0, 0.6);
        let neighbor = model(2, 1.8, 5.5, 0.45);
        let acq = noiseless();
        let w = synth_waveform(&base, Band::B, &acq, 21).unwrap();
        let spec = ConfounderSpec {
            kind: ConfounderKind::GreyMatter,
            magnitude: 1.0,
            affected_fraction: 1.0,
            direction: -1,
        };
        let ctx = ConfounderContext {
            model: &base,
            neighbor: Some(&neighbor),
            band: Band::B,
            acquisition: &acq,
        };
        let confounded = apply_confounder(&w, &spec, &ctx, 21).unwrap();
        let direct = synth_waveform(&neighbor, Band::B, &acq, 21).unwrap();
        assert_eq!(confounded.samples, direct.samples);
    }

    #[test]
    fn rejects_out_of_range_magnitude() {
        let w = Waveform { samples: vec![1.0; 64], dt: 0.4, band: Band::A };
        assert!(matches!(apply_blood(&w, 1.5, 40.0, 0), Err(Error::Parameter(_))));
    }
}
