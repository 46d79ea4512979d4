//! Amplitude-weighted mean lifetime of a decay.

use crate::error::{Error, Result};

/// LT = integral(t*h) / integral(h) over the record.
///
/// Composite Simpson weights; a trailing odd interval falls back to the
/// trapezoid rule. The fourth-order rule matters at short lifetimes, where
/// the trapezoid bias alone approaches the recovery tolerance.
pub fn mean_lifetime(h: &[f64], dt: f64) -> Result<f64> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Parameter(format!("dt must be positive, got {dt}")));
    }
    if h.len() < 2 {
        return Err(Error::Input("decay needs at least two samples".into()));
    }
    let scale = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if h.iter().any(|&v| !v.is_finite() || v < -1e-9 * scale) {
        return Err(Error::Input("decay must be nonnegative and finite".into()));
    }

    let weights = simpson_weights(h.len());
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &v) in h.iter().enumerate() {
        let v = v.max(0.0);
        let t = i as f64 * dt;
        num += weights[i] * t * v;
        den += weights[i] * v;
    }
    if den <= 0.0 {
        return Err(Error::DegenerateInput("all-zero decay".into()));
    }
    Ok(num / den)
}

/// Quadrature weights for `n` samples: composite Simpson over the leading
/// even interval count, trapezoid on a final odd interval.
fn simpson_weights(n: usize) -> Vec<f64> {
    let mut w = vec![0.0; n];
    let intervals = n - 1;
    let simpson_end = if intervals % 2 == 0 { n - 1 } else { n - 2 };
    if simpson_end >= 2 {
        w[0] += 1.0 / 3.0;
        w[simpson_end] += 1.0 / 3.0;
        for (i, wi) in w.iter_mut().enumerate().take(simpson_end).skip(1) {
            *wi += if i % 2 == 1 { 4.0 / 3.0 } else { 2.0 / 3.0 };
        }
    }
    if simpson_end < n - 1 {
        w[n - 2] += 0.5;
        w[n - 1] += 0.5;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Closed-form geometric sums over an index subsequence a, a+s, a+2s, ...
    /// up to b: sum of r^i and sum of i*r^i.
    fn geo_sums(r: f64, a: usize, b: usize, s: usize) -> (f64, f64) {
        if b < a {
            return (0.0, 0.0);
        }
        let k = (b - a) / s + 1; // number of terms
        let q = r.powi(s as i32);
        let lead = r.powi(a as i32);
        let kf = k as f64;
        // sum_{j=0}^{k-1} q^j and sum_{j=0}^{k-1} j q^j
        let s0 = (1.0 - q.powf(kf)) / (1.0 - q);
        let s1 = q * (1.0 - kf * q.powf(kf - 1.0) + (kf - 1.0) * q.powf(kf)) / (1.0 - q).powi(2);
        // indices i = a + s*j
        (lead * s0, lead * (a as f64 * s0 + s as f64 * s1))
    }

    #[test]
    fn exponential_lifetime_matches_geometric_series_oracle() {
        // h = exp(-t/4) over 80 ns at dt 0.4 (199 intervals: Simpson over the
        // first 198, trapezoid on the last). The oracle assembles the same
        // quadrature from closed-form geometric sums.
        let tau = 4.0;
        let dt = 0.4;
        let n = 200usize;
        let h: Vec<f64> = (0..n).map(|k| (-(k as f64) * dt / tau).exp()).collect();

        let r = (-dt / tau).exp();
        let m = n - 2; // last Simpson node (even index 198)
        let (ends0, ends1) = {
            let e0 = 1.0 + r.powi(m as i32);
            let e1 = 0.0 + m as f64 * r.powi(m as i32);
            (e0, e1)
        };
        let (odd0, odd1) = geo_sums(r, 1, m - 1, 2);
        let (even0, even1) = geo_sums(r, 2, m - 2, 2);
        let mut den = (ends0 + 4.0 * odd0 + 2.0 * even0) / 3.0;
        let mut num = (ends1 + 4.0 * odd1 + 2.0 * even1) / 3.0;
        // trailing trapezoid interval [n-2, n-1]
        den += 0.5 * (r.powi((n - 2) as i32) + r.powi((n - 1) as i32));
        num += 0.5
            * ((n - 2) as f64 * r.powi((n - 2) as i32) + (n - 1) as f64 * r.powi((n - 1) as i32));
        let oracle = dt * num / den;

        let lt = mean_lifetime(&h, dt).unwrap();
        assert!((lt - oracle).abs() < 1e-10, "lt {lt} vs closed form {oracle}");
        assert!((lt - tau).abs() / tau < 0.01, "lt {lt} vs tau {tau}");
    }

    #[test]
    fn delta_at_origin_has_zero_lifetime() {
        let mut h = vec![0.0; 128];
        h[0] = 5.0;
        assert_eq!(mean_lifetime(&h, 0.4).unwrap(), 0.0);
    }

    #[test]
    fn uniform_decay_centers_at_half_record() {
        let n = 201usize;
        let dt = 0.4;
        let h = vec![1.0; n];
        let lt = mean_lifetime(&h, dt).unwrap();
        let t_end = (n - 1) as f64 * dt;
        assert!((lt - t_end / 2.0).abs() < 1e-9, "lt {lt} vs {}", t_end / 2.0);
    }

    #[test]
    fn all_zero_decay_is_degenerate() {
        assert!(matches!(mean_lifetime(&[0.0; 64], 0.4), Err(Error::DegenerateInput(_))));
    }
}
