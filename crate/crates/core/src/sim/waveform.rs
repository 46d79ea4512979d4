//! Forward model: bi-exponential decay, Gaussian IRF, convolution, noise.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::rng_for;

use super::{AcquisitionSpec, Band, ClassDecayModel, Waveform};

/// Discretized Gaussian IRF kernel, normalized to unit sum.
///
/// The kernel covers ±4 sigma with its peak at 4 sigma, so the convolved
/// waveform rises after t = 0. A FWHM much smaller than the sample period
/// collapses to a single-sample delta.
pub fn gaussian_irf(fwhm_ns: f64, dt_ns: f64) -> Vec<f64> {
    let sigma = fwhm_ns / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
    if sigma < dt_ns * 1e-6 {
        return vec![1.0];
    }
    let center = 4.0 * sigma;
    let len = ((8.0 * sigma) / dt_ns).ceil() as usize + 1;
    let mut kernel: Vec<f64> = (0..len)
        .map(|k| {
            let t = k as f64 * dt_ns - center;
            (-0.5 * (t / sigma).powi(2)).exp()
        })
        .collect();
    let sum: f64 = kernel.iter().sum();
    for v in &mut kernel {
        *v /= sum;
    }
    kernel
}

/// Causal convolution of `signal` with `kernel`, truncated to `n` samples.
pub fn conv_truncated(kernel: &[f64], signal: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (k, &kv) in kernel.iter().enumerate() {
        if kv == 0.0 {
            continue;
        }
        for i in k..n {
            out[i] += kv * signal[i - k];
        }
    }
    out
}

/// Synthesize one waveform from a class decay model.
///
/// The fluorescence impulse response is `a1*exp(-t/tau1) + a2*exp(-t/tau2)`
/// with the fast-component weight drawn from the band's fraction
/// distribution, convolved with a Gaussian IRF and overlaid with zero-mean
/// Gaussian noise scaled to the requested peak SNR. Deterministic given the
/// seed.
pub fn synth_waveform(
    model: &ClassDecayModel,
    band: Band,
    acq: &AcquisitionSpec,
    seed: u64,
) -> Result<Waveform> {
    model.validate()?;
    acq.validate()?;

    let mut rng = rng_for(seed, &[]);
    let n = acq.n_samples();
    let dist = model.fractions.get(band);
    let fraction = if dist.sd > 0.0 {
        let normal = Normal::new(dist.mean, dist.sd)
            .map_err(|e| Error::Parameter(format!("fraction distribution: {e}")))?;
        normal.sample(&mut rng).clamp(0.0, 1.0)
    } else {
        dist.mean
    };

    let (tau1, tau2) = model.lifetimes;
    let a1 = fraction * model.amplitude_mean;
    let a2 = (1.0 - fraction) * model.amplitude_mean;
    let decay: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 * acq.dt_ns;
            a1 * (-t / tau1).exp() + a2 * (-t / tau2).exp()
        })
        .collect();

    let kernel = gaussian_irf(acq.irf_fwhm_ns, acq.dt_ns);
    let mut samples = conv_truncated(&kernel, &decay, n);

    if acq.snr_db.is_finite() {
        let peak = samples.iter().copied().fold(0.0_f64, f64::max);
        let sigma = peak / 10f64.powf(acq.snr_db / 20.0);
        if sigma > 0.0 {
            for v in &mut samples {
                *v += sigma * rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
        }
    }

    let w = Waveform { samples, dt: acq.dt_ns, band };
    w.validate()?;
    Ok(w)
}
