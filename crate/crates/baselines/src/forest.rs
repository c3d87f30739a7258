//! Bagged CART ensemble with per-split feature subsampling.

use forest_core::hash::{fnv1a64, fnv1a64_extend};
use forest_core::DriverClass;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tree::{DecisionTree, TreeOptions};
use crate::{mode_class, Result};

/// Random forest: each tree trains on a bootstrap resample with sqrt(d)
/// features drawn fresh at every split; prediction is the majority vote
/// (ties toward the canonical class order). Per-tree generators derive
/// from `(seed, tree index)`, so trees can be fit in any order with
/// identical results.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    pub(crate) trees: Vec<DecisionTree>,
    pub(crate) bootstrap: bool,
    pub(crate) feature_subsample: bool,
}

impl RandomForest {
    #[allow(clippy::too_many_arguments)]
    pub fn fit(
        rows: &[Vec<f64>],
        labels: &[DriverClass],
        n_trees: usize,
        max_depth: Option<usize>,
        min_samples_leaf: usize,
        bootstrap: bool,
        feature_subsample: bool,
        seed: u64,
    ) -> Result<Self> {
        let d = rows.first().map(|r| r.len()).unwrap_or(0);
        let mtry = if feature_subsample {
            Some(((d as f64).sqrt().floor() as usize).max(1))
        } else {
            None
        };

        let mut trees = Vec::with_capacity(n_trees);
        for tree_idx in 0..n_trees {
            let tree_seed = fnv1a64_extend(fnv1a64(&seed.to_le_bytes()), &tree_idx.to_le_bytes());
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);

            let (sample_rows, sample_labels) = if bootstrap {
                let n = rows.len();
                let mut r = Vec::with_capacity(n);
                let mut l = Vec::with_capacity(n);
                for _ in 0..n {
                    let pick = rng.gen_range(0..n);
                    r.push(rows[pick].clone());
                    l.push(labels[pick]);
                }
                (r, l)
            } else {
                (rows.to_vec(), labels.to_vec())
            };

            let mut options = TreeOptions {
                max_depth,
                min_samples_leaf: min_samples_leaf.max(1),
                mtry,
                rng: mtry.map(|_| &mut rng),
            };
            trees.push(DecisionTree::fit_with_options(
                &sample_rows,
                &sample_labels,
                &mut options,
            )?);
        }
        Ok(Self {
            trees,
            bootstrap,
            feature_subsample,
        })
    }

    pub fn predict(&self, row: &[f64]) -> DriverClass {
        let mut votes = [0usize; 4];
        for tree in &self.trees {
            votes[tree.predict(row).index()] += 1;
        }
        mode_class(&votes)
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use DriverClass::*;

    fn blob_data() -> (Vec<Vec<f64>>, Vec<DriverClass>) {
        let centers = [(0.0, 0.0), (8.0, 0.0), (0.0, 8.0), (8.0, 8.0)];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, &(cx, cy)) in centers.iter().enumerate() {
            for i in 0..12 {
                let dx = (i % 4) as f64 * 0.2 - 0.3;
                let dy = (i / 4) as f64 * 0.2 - 0.2;
                rows.push(vec![cx + dx, cy + dy]);
                labels.push(DriverClass::from_index(c).unwrap());
            }
        }
        (rows, labels)
    }

    #[test]
    fn single_tree_without_randomness_equals_cart() {
        let (rows, labels) = blob_data();
        let forest =
            RandomForest::fit(&rows, &labels, 1, Some(8), 1, false, false, 42).unwrap();
        let tree = DecisionTree::fit(&rows, &labels, Some(8), 1).unwrap();
        for row in &rows {
            assert_eq!(forest.predict(row), tree.predict(row));
        }
        // and on off-grid probes
        for probe in [[1.0, 1.0], [7.0, 1.0], [1.0, 7.0], [7.5, 7.5]] {
            assert_eq!(forest.predict(&probe), tree.predict(&probe));
        }
    }

    #[test]
    fn forest_separates_clean_blobs() {
        let (rows, labels) = blob_data();
        let forest = RandomForest::fit(&rows, &labels, 50, None, 1, true, true, 7).unwrap();
        assert_eq!(forest.predict(&[0.1, 0.1]), Plantation);
        assert_eq!(forest.predict(&[8.1, 0.0]), SmallholderAgriculture);
        assert_eq!(forest.predict(&[0.0, 8.1]), GrasslandShrubland);
        assert_eq!(forest.predict(&[8.0, 8.0]), Other);
    }

    #[test]
    fn fit_is_deterministic_under_seed() {
        let (rows, labels) = blob_data();
        let a = RandomForest::fit(&rows, &labels, 20, Some(6), 1, true, true, 99).unwrap();
        let b = RandomForest::fit(&rows, &labels, 20, Some(6), 1, true, true, 99).unwrap();
        assert_eq!(a, b);
    }
}
