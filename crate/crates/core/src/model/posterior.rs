//! Class-probability matrix with the simplex invariant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// n x C matrix of class posteriors; every row sums to 1 within 1e-9.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorMatrix {
    pub n_rows: usize,
    pub n_classes: usize,
    /// Row-major probabilities.
    pub data: Vec<f64>,
}

pub const ROW_SUM_TOL: f64 = 1e-9;

impl PosteriorMatrix {
    pub fn new(n_rows: usize, n_classes: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_rows * n_classes {
            return Err(Error::Input(format!(
                "posterior data length {} does not match {n_rows}x{n_classes}",
                data.len()
            )));
        }
        let p = PosteriorMatrix { n_rows, n_classes, data };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rows == 0 || self.n_classes == 0 {
            return Err(Error::Input("empty posterior matrix".into()));
        }
        for (i, row) in self.rows().enumerate() {
            let mut sum = 0.0;
            for &v in row {
                if !(v >= 0.0) {
                    return Err(Error::Input(format!("negative probability in row {i}")));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Input(format!("row {i} sums to {sum}, not 1")));
            }
        }
        Ok(())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_classes..(i + 1) * self.n_classes]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_classes)
    }

    /// argmax class per row; ties resolve to the lowest class index.
    pub fn predicted_labels(&self) -> Vec<usize> {
        self.rows()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0usize, f64::NEG_INFINITY), |best, (c, &p)| {
                        if p > best.1 {
                            (c, p)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect()
    }

    /// Probability column for one class.
    pub fn class_column(&self, c: usize) -> Vec<f64> {
        self.rows().map(|row| row[c]).collect()
    }

    /// Stack posteriors row-wise in the given order.
    pub fn vstack(parts: &[&PosteriorMatrix]) -> Result<PosteriorMatrix> {
        let first = parts.first().ok_or_else(|| Error::Input("nothing to stack".into()))?;
        let n_classes = first.n_classes;
        let mut data = Vec::new();
        let mut n_rows = 0;
        for p in parts {
            if p.n_classes != n_classes {
                return Err(Error::Input("class count mismatch in stack".into()));
            }
            data.extend_from_slice(&p.data);
            n_rows += p.n_rows;
        }
        PosteriorMatrix::new(n_rows, n_classes, data)
    }
}

/// Exact renormalization guard: divides each row by its sum so the simplex
/// invariant holds to machine precision after accumulation.
pub fn normalize_rows(n_classes: usize, data: &mut [f64]) {
    for row in data.chunks_exact_mut(n_classes) {
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            for v in row {
                *v /= sum;
            }
        } else {
            let u = 1.0 / n_classes as f64;
            for v in row {
                *v = u;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_rows_off_the_simplex() {
        assert!(PosteriorMatrix::new(1, 2, vec![0.6, 0.6]).is_err());
        assert!(PosteriorMatrix::new(1, 2, vec![-0.1, 1.1]).is_err());
        assert!(PosteriorMatrix::new(1, 2, vec![0.3, 0.7]).is_ok());
    }

    #[test]
    fn argmax_ties_resolve_to_lowest_index() {
        let p = PosteriorMatrix::new(1, 3, vec![0.4, 0.4, 0.2]).unwrap();
        assert_eq!(p.predicted_labels(), vec![0]);
    }
}
