//! Per-feature z-scoring fit on the training split only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column-wise z-score transform. Fitting uses population statistics of
/// the training rows; zero-variance columns map to 0 so constant
/// features cannot blow up the linear models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(train_rows: &[Vec<f64>]) -> Result<Self> {
        if train_rows.len() < 2 {
            return Err(Error::FeatureError(format!(
                "standardization needs at least 2 training rows, got {}",
                train_rows.len()
            )));
        }
        let d = train_rows[0].len();
        let n = train_rows.len() as f64;
        let mut mean = vec![0.0; d];
        for row in train_rows {
            if row.len() != d {
                return Err(Error::FeatureError("ragged feature rows".into()));
            }
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; d];
        for row in train_rows {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                let diff = v - m;
                *s += diff * diff;
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt()).collect();
        Ok(Self { mean, std })
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| if *s == 0.0 { 0.0 } else { (v - m) / s })
            .collect()
    }

    pub fn transform(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.transform_row(r)).collect()
    }
}
