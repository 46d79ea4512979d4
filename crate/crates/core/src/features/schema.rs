//! Feature vector layout and per-point extraction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{Band, PointWaveforms};

use super::deconv::deconvolve;
use super::laguerre::LaguerreBasis;
use super::lifetime::mean_lifetime;
use super::phasor::phasor_harmonics;

/// Ordered feature layout: per band, LT then the Laguerre coefficients then
/// the phasor (g, s) pairs, with an optional intensity-ratio extension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub bands: Vec<Band>,
    pub laguerre_order: usize,
    pub harmonics: usize,
    /// Optional extra feature per band: the band's share of total intensity.
    #[serde(default)]
    pub include_intensity_ratio: bool,
    /// Compute phasors from the raw waveform instead of the deconvolved
    /// response.
    #[serde(default)]
    pub phasor_on_raw: bool,
}

impl Default for FeatureSchema {
    fn default() -> Self {
        Self {
            bands: vec![Band::A, Band::B],
            laguerre_order: 12,
            harmonics: 3,
            include_intensity_ratio: false,
            phasor_on_raw: false,
        }
    }
}

impl FeatureSchema {
    pub fn per_band(&self) -> usize {
        1 + self.laguerre_order
            + 2 * self.harmonics
            + if self.include_intensity_ratio { 1 } else { 0 }
    }

    pub fn dimension(&self) -> usize {
        self.bands.len() * self.per_band()
    }

    /// Column names, e.g. `bandA_LT`, `bandA_LC01`, ..., `bandA_Ph3s`.
    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.dimension());
        for &band in &self.bands {
            let p = band.prefix();
            out.push(format!("{p}_LT"));
            for l in 1..=self.laguerre_order {
                out.push(format!("{p}_LC{l:02}"));
            }
            for h in 1..=self.harmonics {
                out.push(format!("{p}_Ph{h}g"));
                out.push(format!("{p}_Ph{h}s"));
            }
            if self.include_intensity_ratio {
                out.push(format!("{p}_IR"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.bands.is_empty() {
            return Err(Error::Config("features.bands: need at least one band".into()));
        }
        if self.laguerre_order == 0 {
            return Err(Error::Config("features.laguerre_order: must be positive".into()));
        }
        if self.harmonics == 0 {
            return Err(Error::Config("features.harmonics: must be positive".into()));
        }
        Ok(())
    }
}

/// Extract the feature vector for one point.
pub fn extract_features(
    point: &PointWaveforms,
    irf: &[f64],
    basis: &LaguerreBasis,
    schema: &FeatureSchema,
) -> Result<Vec<f64>> {
    schema.validate()?;
    if basis.order() != schema.laguerre_order {
        return Err(Error::Input(format!(
            "basis order {} does not match schema order {}",
            basis.order(),
            schema.laguerre_order
        )));
    }

    let total_intensity: f64 = if schema.include_intensity_ratio {
        schema
            .bands
            .iter()
            .map(|&b| point.get(b).samples.iter().sum::<f64>())
            .sum()
    } else {
        0.0
    };

    let mut out = Vec::with_capacity(schema.dimension());
    for &band in &schema.bands {
        let w = point.get(band);
        let fit = deconvolve(w, irf, basis)?;
        out.push(mean_lifetime(&fit.impulse_response, w.dt)?);
        out.extend_from_slice(&fit.coefficients);
        let phasor_src: &[f64] = if schema.phasor_on_raw {
            &w.samples
        } else {
            &fit.impulse_response
        };
        let set = phasor_harmonics(phasor_src, w.dt, schema.harmonics)?;
        for p in &set.harmonics {
            out.push(p.g);
            out.push(p.s);
        }
        if schema.include_intensity_ratio {
            out.push(w.samples.iter().sum::<f64>() / total_intensity);
        }
    }
    debug_assert_eq!(out.len(), schema.dimension());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::laguerre_basis;
    use crate::sim::{
        gaussian_irf, synth_waveform, AcquisitionSpec, ClassDecayModel, FractionDist, PerBand,
    };

    fn make_point(tau_a: f64, tau_b: f64, acq: &AcquisitionSpec, seed: u64) -> PointWaveforms {
        let model = |tau: f64| ClassDecayModel {
            class_index: 0,
            lifetimes: (tau, tau + 1e-12),
            fractions: PerBand::uniform(FractionDist { mean: 1.0, sd: 0.0 }),
            amplitude_mean: 1.0,
        };
        PointWaveforms {
            band_a: synth_waveform(&model(tau_a), Band::A, acq, seed).unwrap(),
            band_b: synth_waveform(&model(tau_b), Band::B, acq, seed).unwrap(),
        }
    }

    #[test]
    fn default_schema_has_38_dimensions() {
        let schema = FeatureSchema::default();
        assert_eq!(schema.dimension(), 38);
        let names = schema.names();
        assert_eq!(names.len(), 38);
        assert_eq!(names[0], "bandA_LT");
        assert_eq!(names[1], "bandA_LC01");
        assert_eq!(names[18], "bandA_Ph3s");
        assert_eq!(names[19], "bandB_LT");
        assert_eq!(names[37], "bandB_Ph3s");
    }

    #[test]
    fn lifetime_feature_tracks_the_simulated_decay() {
        let acq = AcquisitionSpec { snr_db: f64::INFINITY, ..Default::default() };
        let point = make_point(4.0, 4.0, &acq, 2);
        let basis = laguerre_basis(12, 0.88, acq.n_samples()).unwrap();
        let irf = gaussian_irf(acq.irf_fwhm_ns, acq.dt_ns);
        let schema = FeatureSchema::default();
        let x = extract_features(&point, &irf, &basis, &schema).unwrap();
        assert!((x[0] - 4.0).abs() / 4.0 < 0.05, "bandA LT {}", x[0]);
    }

    #[test]
    fn identical_band_waveforms_give_identical_blocks() {
        let acq = AcquisitionSpec { snr_db: f64::INFINITY, ..Default::default() };
        let mut point = make_point(3.0, 3.0, &acq, 9);
        point.band_b.samples = point.band_a.samples.clone();
        let basis = laguerre_basis(12, 0.88, acq.n_samples()).unwrap();
        let irf = gaussian_irf(acq.irf_fwhm_ns, acq.dt_ns);
        let schema = FeatureSchema::default();
        let x = extract_features(&point, &irf, &basis, &schema).unwrap();
        let per = schema.per_band();
        for k in 0..per {
            assert_eq!(x[k], x[per + k], "feature {k} differs between bands");
        }
    }

    #[test]
    fn amplitude_scaling_leaves_lt_and_phasor_invariant_and_scales_lc() {
        let acq = AcquisitionSpec { snr_db: f64::INFINITY, ..Default::default() };
        let point = make_point(3.0, 5.0, &acq, 4);
        let mut scaled = point.clone();
        for v in &mut scaled.band_a.samples {
            *v *= 7.0;
        }
        for v in &mut scaled.band_b.samples {
            *v *= 7.0;
        }
        let basis = laguerre_basis(12, 0.88, acq.n_samples()).unwrap();
        let irf = gaussian_irf(acq.irf_fwhm_ns, acq.dt_ns);
        let schema = FeatureSchema::default();
        let x = extract_features(&point, &irf, &basis, &schema).unwrap();
        let y = extract_features(&scaled, &irf, &basis, &schema).unwrap();
        let names = schema.names();
        for (k, name) in names.iter().enumerate() {
            if name.contains("_LC") {
                assert!(
                    (y[k] - 7.0 * x[k]).abs() <= 1e-6 * x[k].abs().max(1.0),
                    "{name}: {} vs 7*{}",
                    y[k],
                    x[k]
                );
            } else {
                assert!(
                    (y[k] - x[k]).abs() <= 1e-6 * x[k].abs().max(1.0),
                    "{name}: {} vs {}",
                    y[k],
                    x[k]
                );
            }
        }
    }

    #[test]
    fn intensity_ratio_extension_adds_two_features_that_sum_to_one() {
        let acq = AcquisitionSpec { snr_db: f64::INFINITY, ..Default::default() };
        let point = make_point(2.0, 6.0, &acq, 5);
        let basis = laguerre_basis(12, 0.88, acq.n_samples()).unwrap();
        let irf = gaussian_irf(acq.irf_fwhm_ns, acq.dt_ns);
        let schema = FeatureSchema { include_intensity_ratio: true, ..Default::default() };
        assert_eq!(schema.dimension(), 40);
        let x = extract_features(&point, &irf, &basis, &schema).unwrap();
        let per = schema.per_band();
        let ir_a = x[per - 1];
        let ir_b = x[2 * per - 1];
        assert!((ir_a + ir_b - 1.0).abs() < 1e-12);
    }
}
