//! k-nearest-neighbor classifier over stored exemplars.

use forest_core::DriverClass;

use crate::{mode_class, BaselineError, Result};

/// Brute-force kNN with Euclidean distance. Neighbor ties at equal
/// distance resolve by exemplar index, vote ties by canonical class
/// order, so prediction is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    pub exemplars: Vec<Vec<f64>>,
    pub labels: Vec<DriverClass>,
    pub k: usize,
}

impl KnnModel {
    pub fn fit(rows: &[Vec<f64>], labels: &[DriverClass], k: usize) -> Result<Self> {
        if rows.is_empty() || k == 0 {
            return Err(BaselineError::EmptyTrainingSet);
        }
        Ok(Self {
            exemplars: rows.to_vec(),
            labels: labels.to_vec(),
            k,
        })
    }

    pub fn predict(&self, row: &[f64]) -> DriverClass {
        let mut dists: Vec<(f64, usize)> = self
            .exemplars
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let d2: f64 = e.iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2, i)
            })
            .collect();
        let k = self.k.min(dists.len());
        dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let mut votes = [0usize; 4];
        for &(_, idx) in dists.iter().take(k) {
            votes[self.labels[idx].index()] += 1;
        }
        mode_class(&votes)
    }
}
