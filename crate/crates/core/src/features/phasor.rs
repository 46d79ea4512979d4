//! Phasor harmonics of a decay: normalized DFT coefficients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One phasor coordinate pair, dimensionless.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasorPoint {
    pub g: f64,
    pub s: f64,
}

/// Phasor coordinates for harmonics 1..n over the record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasorSet {
    pub harmonics: Vec<PhasorPoint>,
}

impl PhasorSet {
    pub fn harmonic(&self, n: usize) -> PhasorPoint {
        self.harmonics[n - 1]
    }

    /// Signed distance of the first harmonic from the universal semicircle;
    /// nonpositive means inside or on it.
    pub fn semicircle_excess(&self) -> f64 {
        let p = self.harmonic(1);
        (p.g - 0.5).powi(2) + p.s.powi(2) - 0.25
    }
}

/// Compute phasor harmonics 1..=n_max of a nonnegative decay.
///
/// g_n = Re(H_n)/H_0 and s_n = -Im(H_n)/H_0, where H_n is the n-th DFT
/// coefficient over the record; the fundamental frequency is
/// omega_1 = 2*pi/(N*dt).
pub fn phasor_harmonics(h: &[f64], dt: f64, n_max: usize) -> Result<PhasorSet> {
    if !(dt > 0.0) {
        return Err(Error::Parameter(format!("dt must be positive, got {dt}")));
    }
    if n_max == 0 {
        return Err(Error::Parameter("need at least one harmonic".into()));
    }
    if h.is_empty() {
        return Err(Error::Input("empty decay".into()));
    }
    let scale = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if h.iter().any(|&v| v < -1e-9 * scale) {
        return Err(Error::Input("decay has negative samples".into()));
    }
    let dc: f64 = h.iter().sum();
    if !(dc > 0.0) {
        return Err(Error::DegenerateInput("zero DC component".into()));
    }

    let n = h.len() as f64;
    let mut harmonics = Vec::with_capacity(n_max);
    for harm in 1..=n_max {
        let theta = 2.0 * std::f64::consts::PI * harm as f64 / n;
        let mut re = 0.0;
        let mut im = 0.0;
        for (k, &v) in h.iter().enumerate() {
            let phase = theta * k as f64;
            re += v * phase.cos();
            im -= v * phase.sin();
        }
        harmonics.push(PhasorPoint { g: re / dc, s: -im / dc });
    }
    Ok(PhasorSet { harmonics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn mono_exponential_at_unit_omega_tau_sits_at_half_half() {
        // tau = N*dt/(2*pi) makes omega_1 * tau = 1; the analytic phasor is
        // (0.5, 0.5). A fine grid keeps the sampling bias below 1e-3.
        let n = 8192usize;
        let dt = 0.05;
        let tau = n as f64 * dt / (2.0 * std::f64::consts::PI);
        let h: Vec<f64> = (0..n).map(|k| (-(k as f64) * dt / tau).exp()).collect();
        let set = phasor_harmonics(&h, dt, 1).unwrap();
        let p = set.harmonic(1);
        assert!((p.g - 0.5).abs() <= 1e-3, "g = {}", p.g);
        assert!((p.s - 0.5).abs() <= 1e-3, "s = {}", p.s);
    }

    #[test]
    fn delta_at_origin_maps_to_one_zero_for_all_harmonics() {
        let mut h = vec![0.0; 256];
        h[0] = 3.0;
        let set = phasor_harmonics(&h, 0.4, 3).unwrap();
        for n in 1..=3 {
            let p = set.harmonic(n);
            assert_eq!((p.g, p.s), (1.0, 0.0), "harmonic {n}");
        }
    }

    #[test]
    fn two_exponential_mixtures_stay_inside_the_semicircle() {
        let mut rng = crate::rng::rng_for(2024, &[]);
        let n = 512usize;
        let dt = 0.4;
        for _ in 0..1000 {
            let tau1: f64 = rng.gen_range(0.3..4.0);
            let tau2: f64 = rng.gen_range(4.0..30.0);
            let a: f64 = rng.gen_range(0.05..0.95);
            let h: Vec<f64> = (0..n)
                .map(|k| {
                    let t = k as f64 * dt;
                    a * (-t / tau1).exp() + (1.0 - a) * (-t / tau2).exp()
                })
                .collect();
            let set = phasor_harmonics(&h, dt, 3).unwrap();
            assert!(
                set.semicircle_excess() < 0.0,
                "mixture ({tau1}, {tau2}, {a}) left the semicircle: {}",
                set.semicircle_excess()
            );
        }
    }

    #[test]
    fn zero_dc_is_degenerate() {
        let h = vec![0.0; 128];
        assert!(matches!(phasor_harmonics(&h, 0.4, 3), Err(Error::DegenerateInput(_))));
    }
}
