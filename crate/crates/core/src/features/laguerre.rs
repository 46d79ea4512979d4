//! Discrete-time Laguerre basis.
//!
//! Functions are generated with the standard all-pass recurrence (pole at
//! sqrt(alpha)) and then re-orthonormalized over the finite record with a QR
//! factorization, so the columns are orthonormal on the actual sample window
//! rather than the infinite horizon.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Orthonormal discrete Laguerre basis sampled over `n` points.
#[derive(Debug, Clone)]
pub struct LaguerreBasis {
    order: usize,
    alpha: f64,
    n: usize,
    /// n x order, orthonormal columns.
    matrix: DMatrix<f64>,
}

impl LaguerreBasis {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Basis value for function `j` at sample `i`.
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    /// h = B c for a coefficient vector.
    pub fn reconstruct(&self, coefficients: &[f64]) -> Vec<f64> {
        assert_eq!(coefficients.len(), self.order);
        let mut h = vec![0.0; self.n];
        for (j, &c) in coefficients.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for i in 0..self.n {
                h[i] += c * self.matrix[(i, j)];
            }
        }
        h
    }

    /// max |B^T B - I|, for diagnostics and tests.
    pub fn gram_deviation(&self) -> f64 {
        let gram = self.matrix.transpose() * &self.matrix;
        let mut worst = 0.0f64;
        for i in 0..self.order {
            for j in 0..self.order {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - target).abs());
            }
        }
        worst
    }
}

/// Build the order-`l` discrete Laguerre basis with scale `alpha` over `n`
/// samples.
pub fn laguerre_basis(l: usize, alpha: f64, n: usize) -> Result<LaguerreBasis> {
    if !(alpha.is_finite() && alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Parameter(format!("laguerre alpha must be in (0,1), got {alpha}")));
    }
    if l == 0 || l > n {
        return Err(Error::Parameter(format!(
            "laguerre order must satisfy 1 <= L <= N, got L={l}, N={n}"
        )));
    }

    // Recurrence over samples: b_j(i) = s*b_j(i-1) + s*b_{j-1}(i) - b_{j-1}(i-1)
    // with s = sqrt(alpha) and b_0(i) = sqrt(1-alpha)*s^i.
    let s = alpha.sqrt();
    let mut raw = DMatrix::<f64>::zeros(n, l);
    raw[(0, 0)] = (1.0 - alpha).sqrt();
    for i in 1..n {
        raw[(i, 0)] = s * raw[(i - 1, 0)];
    }
    for j in 1..l {
        raw[(0, j)] = s * raw[(0, j - 1)];
        for i in 1..n {
            raw[(i, j)] = s * raw[(i - 1, j)] + s * raw[(i, j - 1)] - raw[(i - 1, j - 1)];
        }
    }

    // Re-orthonormalize over the finite window; flip signs so each column
    // keeps its analytic orientation.
    let qr = raw.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..l {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }

    Ok(LaguerreBasis { order: l, alpha, n, matrix: q })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_function_has_unit_norm() {
        let basis = laguerre_basis(1, 0.5, 256).unwrap();
        let norm: f64 = (0..256).map(|i| basis.value(i, 0).powi(2)).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        // First function is a pure geometric decay, positive everywhere.
        assert!((0..256).all(|i| basis.value(i, 0) > 0.0));
    }

    #[test]
    fn gram_matrix_is_identity() {
        let basis = laguerre_basis(12, 0.88, 1024).unwrap();
        assert!(basis.gram_deviation() <= 1e-8, "deviation {}", basis.gram_deviation());
    }

    #[test]
    fn square_basis_has_unit_determinant() {
        let basis = laguerre_basis(64, 0.7, 64).unwrap();
        let det = basis.matrix().determinant().abs();
        assert!((det - 1.0).abs() < 1e-6, "det {det}");
    }

    #[test]
    fn orthonormality_holds_across_orders_and_scales() {
        for &(l, n) in &[(4usize, 256usize), (12, 256), (24, 512), (24, 2048)] {
            for &alpha in &[0.5, 0.8, 0.88, 0.95] {
                let basis = laguerre_basis(l, alpha, n).unwrap();
                assert!(
                    basis.gram_deviation() <= 1e-8,
                    "L={l} N={n} alpha={alpha}: {}",
                    basis.gram_deviation()
                );
            }
        }
    }

    #[test]
    fn rejects_bad_alpha_and_order() {
        assert!(matches!(laguerre_basis(4, 1.0, 64), Err(Error::Parameter(_))));
        assert!(matches!(laguerre_basis(4, 0.0, 64), Err(Error::Parameter(_))));
        assert!(matches!(laguerre_basis(0, 0.5, 64), Err(Error::Parameter(_))));
        assert!(matches!(laguerre_basis(65, 0.5, 64), Err(Error::Parameter(_))));
    }
}
