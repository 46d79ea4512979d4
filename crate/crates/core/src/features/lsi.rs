//! Constrained least squares: NNLS, LDP and LSI solvers.
//!
//! The chain follows Lawson & Hanson: an inequality-constrained least
//! squares problem (LSI) reduces to least distance programming (LDP), which
//! reduces to nonnegative least squares (NNLS) solved with the active-set
//! algorithm.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const ZERO_TOL: f64 = 1e-12;

/// Lawson–Hanson active-set NNLS: minimize ||A x - b|| subject to x >= 0.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, n) = a.shape();
    if b.len() != m {
        return Err(Error::Input(format!("nnls: A is {m}x{n} but b has length {}", b.len())));
    }
    let mut x = DVector::<f64>::zeros(n);
    let mut passive = vec![false; n];
    let max_outer = 3 * n + 30;

    let scale = a.amax().max(1.0);
    let tol = ZERO_TOL * scale * (m as f64).sqrt();

    for _ in 0..max_outer {
        let residual = b - a * &x;
        let w = a.transpose() * &residual;

        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if !passive[j] && w[j] > tol {
                if best.map(|(_, v)| w[j] > v).unwrap_or(true) {
                    best = Some((j, w[j]));
                }
            }
        }
        let Some((enter, _)) = best else {
            return Ok(x);
        };
        passive[enter] = true;

        // Inner loop: restrict to the passive set until feasible.
        loop {
            let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let sub = a.select_columns(idx.iter());
            let z_sub = ls_solve(&sub, b)?;

            if z_sub.iter().all(|&v| v > tol) {
                x.fill(0.0);
                for (k, &j) in idx.iter().enumerate() {
                    x[j] = z_sub[k];
                }
                break;
            }

            // Step toward z, stopping at the first variable that hits zero.
            let mut alpha = f64::INFINITY;
            for (k, &j) in idx.iter().enumerate() {
                if z_sub[k] <= tol {
                    let denom = x[j] - z_sub[k];
                    if denom > 0.0 {
                        alpha = alpha.min(x[j] / denom);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for (k, &j) in idx.iter().enumerate() {
                x[j] += alpha * (z_sub[k] - x[j]);
            }
            for &j in &idx {
                if x[j] <= tol {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    Ok(x)
}

/// Unconstrained least squares via SVD (subproblems here are tiny).
fn ls_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = a.clone().svd(true, true);
    svd.solve(b, 1e-13).map_err(|e| Error::Numerical(format!("least squares solve failed: {e}")))
}

/// Least distance programming: minimize ||x|| subject to G x >= h.
pub fn ldp(g: &DMatrix<f64>, h: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, n) = g.shape();
    if h.len() != m {
        return Err(Error::Input(format!("ldp: G is {m}x{n} but h has length {}", h.len())));
    }
    // E = [G^T; h^T], f = e_{n+1}; the NNLS residual encodes the solution.
    let mut e = DMatrix::<f64>::zeros(n + 1, m);
    for i in 0..m {
        for j in 0..n {
            e[(j, i)] = g[(i, j)];
        }
        e[(n, i)] = h[i];
    }
    let mut f = DVector::<f64>::zeros(n + 1);
    f[n] = 1.0;

    let u = nnls(&e, &f)?;
    let r = &e * &u - &f;
    let rn = r[n];
    if rn.abs() < 1e-10 {
        return Err(Error::Numerical("ldp: incompatible inequality constraints".into()));
    }
    let mut x = DVector::<f64>::zeros(n);
    for j in 0..n {
        x[j] = -r[j] / rn;
    }
    Ok(x)
}

/// Result of an LSI solve.
pub struct LsiSolution {
    pub x: DVector<f64>,
    /// True when the unconstrained minimizer already satisfied G x >= h.
    pub constraints_inactive: bool,
}

/// Least squares with linear inequality constraints:
/// minimize ||E x - f|| subject to G x >= h.
///
/// `E` must have full column rank (callers add a ridge block to ensure it).
pub fn lsi(
    e: &DMatrix<f64>,
    f: &DVector<f64>,
    g: &DMatrix<f64>,
    h: &DVector<f64>,
) -> Result<LsiSolution> {
    let (m, n) = e.shape();
    if m < n {
        return Err(Error::Input(format!("lsi: E must be tall, got {m}x{n}")));
    }
    let qr = e.clone().qr();
    let q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)].abs() < 1e-13 {
            return Err(Error::Numerical("lsi: E is rank deficient".into()));
        }
    }
    let f1 = q.transpose() * f;

    // Unconstrained minimizer: R x = f1.
    let x_free = r
        .solve_upper_triangular(&f1)
        .ok_or_else(|| Error::Numerical("lsi: triangular solve failed".into()))?;
    let slack = g * &x_free - h;
    let feas_tol = 1e-10 * (1.0 + h.amax());
    if slack.iter().all(|&v| v >= -feas_tol) {
        return Ok(LsiSolution { x: x_free, constraints_inactive: true });
    }

    // Substitute z = R x - f1 and solve the LDP in z.
    // G x >= h  <=>  (G R^{-1}) z >= h - G R^{-1} f1.
    let r_inv_cols = {
        let identity = DMatrix::<f64>::identity(n, n);
        r.solve_upper_triangular(&identity)
            .ok_or_else(|| Error::Numerical("lsi: triangular inverse failed".into()))?
    };
    let g_tilde = g * &r_inv_cols;
    let h_tilde = h - &g_tilde * &f1;
    let z = ldp(&g_tilde, &h_tilde)?;
    let x = &r_inv_cols * (z + f1);
    Ok(LsiSolution { x, constraints_inactive: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nnls_matches_unconstrained_solution_when_positive() {
        // A x = b has the exact nonnegative solution x = (1, 2).
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_row_slice(&[1.0, 2.0, 3.0]);
        let x = nnls(&a, &b).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-10 && (x[1] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn nnls_clamps_negative_component() {
        // Unconstrained solution has a negative coordinate; NNLS zeroes it.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let b = DVector::from_row_slice(&[0.0, -1.0]);
        let x = nnls(&a, &b).unwrap();
        assert_eq!(x[1], 0.0);
        assert!(x[0] >= 0.0);
    }

    #[test]
    fn ldp_projects_onto_constraint() {
        // min ||x|| s.t. x1 + x2 >= 2 -> (1, 1).
        let g = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let h = DVector::from_row_slice(&[2.0]);
        let x = ldp(&g, &h).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-8 && (x[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn lsi_returns_unconstrained_solution_when_feasible() {
        let e = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let f = DVector::from_row_slice(&[3.0, 4.0, 0.0]);
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let h = DVector::from_row_slice(&[0.0, 0.0]);
        let sol = lsi(&e, &f, &g, &h).unwrap();
        assert!(sol.constraints_inactive);
        assert!((sol.x[0] - 3.0).abs() < 1e-10 && (sol.x[1] - 4.0).abs() < 1e-10);
    }

    #[test]
    fn lsi_activates_constraints_when_needed() {
        // Unconstrained solution is (-1, 2); constraint x >= 0 binds x1.
        let e = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let f = DVector::from_row_slice(&[-1.0, 2.0, 0.0]);
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let h = DVector::from_row_slice(&[0.0, 0.0]);
        let sol = lsi(&e, &f, &g, &h).unwrap();
        assert!(!sol.constraints_inactive);
        assert!(sol.x[0].abs() < 1e-8, "x1 should be clamped at 0, got {}", sol.x[0]);
        assert!((sol.x[1] - 2.0).abs() < 1e-8);
    }
}
