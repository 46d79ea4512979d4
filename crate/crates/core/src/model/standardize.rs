//! Per-feature z-scoring with statistics taken from the training split only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    /// Fit on training rows. Constant features get unit scale.
    pub fn fit(x: &FeatureMatrix) -> Result<Standardizer> {
        if x.n_rows == 0 {
            return Err(Error::Input("cannot standardize an empty matrix".into()));
        }
        let d = x.n_cols;
        let n = x.n_rows as f64;
        let mut mean = vec![0.0; d];
        for row in x.rows() {
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Input(format!("non-finite value in feature column {j}")));
                }
                mean[j] += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; d];
        for row in x.rows() {
            for (j, &v) in row.iter().enumerate() {
                let c = v - mean[j];
                var[j] += c * c;
            }
        }
        let sd: Vec<f64> =
            var.iter().map(|&v| if v > 0.0 { (v / n).sqrt() } else { 1.0 }).collect();
        Ok(Standardizer { mean, sd })
    }

    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    /// Standardized copy of a row.
    pub fn apply_row(&self, row: &[f64], out: &mut [f64]) {
        for j in 0..row.len() {
            out[j] = (row[j] - self.mean[j]) / self.sd[j];
        }
    }

    pub fn apply(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        if x.n_cols != self.dimension() {
            return Err(Error::Input(format!(
                "feature dimension {} does not match standardizer dimension {}",
                x.n_cols,
                self.dimension()
            )));
        }
        let mut out = vec![0.0; x.data.len()];
        for (i, row) in x.rows().enumerate() {
            self.apply_row(row, &mut out[i * x.n_cols..(i + 1) * x.n_cols]);
        }
        Ok(out)
    }
}
