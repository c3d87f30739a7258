//! Greedy CART with Gini impurity.

use forest_core::DriverClass;
use rand_chacha::ChaCha8Rng;

use crate::{mode_class, BaselineError, Result};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Node {
    Leaf {
        class: u8,
    },
    Split {
        feature: u32,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

/// A CART classifier: axis-aligned splits chosen greedily by Gini
/// impurity decrease. Candidate thresholds are midpoints between
/// consecutive distinct feature values; ties resolve to the first
/// (feature, threshold) in iteration order, so fitting is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub(crate) root: Node,
    pub(crate) n_features: usize,
}

pub(crate) struct TreeOptions<'a> {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features examined per split; `None` means all (plain CART), values
    /// draw a fresh random subset at every node (random-forest mode).
    pub mtry: Option<usize>,
    pub rng: Option<&'a mut ChaCha8Rng>,
}

impl DecisionTree {
    pub fn fit(
        rows: &[Vec<f64>],
        labels: &[DriverClass],
        max_depth: Option<usize>,
        min_samples_leaf: usize,
    ) -> Result<Self> {
        let mut options = TreeOptions {
            max_depth,
            min_samples_leaf: min_samples_leaf.max(1),
            mtry: None,
            rng: None,
        };
        Self::fit_with_options(rows, labels, &mut options)
    }

    pub(crate) fn fit_with_options(
        rows: &[Vec<f64>],
        labels: &[DriverClass],
        options: &mut TreeOptions<'_>,
    ) -> Result<Self> {
        if rows.is_empty() || rows.len() != labels.len() {
            return Err(BaselineError::EmptyTrainingSet);
        }
        let n_features = rows[0].len();
        let indices: Vec<u32> = (0..rows.len() as u32).collect();
        let root = build_node(rows, labels, &indices, 0, options, n_features);
        Ok(Self { root, n_features })
    }

    pub fn predict(&self, row: &[f64]) -> DriverClass {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf { class } => return DriverClass::from_index(*class as usize).unwrap(),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if row[*feature as usize] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(node: &Node) -> usize {
            match node {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(left).max(walk(right)),
            }
        }
        walk(&self.root)
    }
}

fn class_counts(labels: &[DriverClass], indices: &[u32]) -> [usize; 4] {
    let mut counts = [0usize; 4];
    for &i in indices {
        counts[labels[i as usize].index()] += 1;
    }
    counts
}

fn gini(counts: &[usize; 4], total: f64) -> f64 {
    let mut acc = 1.0;
    for &c in counts {
        let p = c as f64 / total;
        acc -= p * p;
    }
    acc
}

fn build_node(
    rows: &[Vec<f64>],
    labels: &[DriverClass],
    indices: &[u32],
    depth: usize,
    options: &mut TreeOptions<'_>,
    n_features: usize,
) -> Node {
    let counts = class_counts(labels, indices);
    let majority = mode_class(&counts).index() as u8;
    let n = indices.len();
    let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
    let depth_capped = options.max_depth.is_some_and(|d| depth >= d);
    if pure || depth_capped || n < 2 * options.min_samples_leaf {
        return Node::Leaf { class: majority };
    }

    let candidate_features: Vec<usize> = match (options.mtry, options.rng.as_deref_mut()) {
        (Some(m), Some(rng)) => {
            rand::seq::index::sample(rng, n_features, m.min(n_features)).into_vec()
        }
        _ => (0..n_features).collect(),
    };

    let parent_gini = gini(&counts, n as f64);
    let mut best: Option<(f64, usize, f64)> = None; // (decrease, feature, threshold)

    let mut order: Vec<u32> = indices.to_vec();
    for &feature in &candidate_features {
        order.sort_by(|&a, &b| {
            rows[a as usize][feature]
                .partial_cmp(&rows[b as usize][feature])
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut left_counts = [0usize; 4];
        for split_at in 1..n {
            let prev = order[split_at - 1] as usize;
            left_counts[labels[prev].index()] += 1;
            let cur = order[split_at] as usize;
            let (lo, hi) = (rows[prev][feature], rows[cur][feature]);
            if lo == hi {
                continue;
            }
            let n_left = split_at;
            let n_right = n - split_at;
            if n_left < options.min_samples_leaf || n_right < options.min_samples_leaf {
                continue;
            }
            let mut right_counts = counts;
            for c in 0..4 {
                right_counts[c] -= left_counts[c];
            }
            let weighted = (n_left as f64 * gini(&left_counts, n_left as f64)
                + n_right as f64 * gini(&right_counts, n_right as f64))
                / n as f64;
            let decrease = parent_gini - weighted;
            if decrease > 1e-12 && best.map_or(true, |(d, _, _)| decrease > d) {
                best = Some((decrease, feature, (lo + hi) / 2.0));
            }
        }
    }

    let Some((_, feature, threshold)) = best else {
        return Node::Leaf { class: majority };
    };
    let (left_idx, right_idx): (Vec<u32>, Vec<u32>) = indices
        .iter()
        .partition(|&&i| rows[i as usize][feature] <= threshold);
    let left = build_node(rows, labels, &left_idx, depth + 1, options, n_features);
    let right = build_node(rows, labels, &right_idx, depth + 1, options, n_features);
    Node::Split {
        feature: feature as u32,
        threshold,
        left: Box::new(left),
        right: Box::new(right),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use DriverClass::*;

    #[test]
    fn unlimited_depth_memorizes_consistent_data() {
        let rows: Vec<Vec<f64>> = (0..24)
            .map(|i| vec![i as f64, (i * 7 % 5) as f64])
            .collect();
        let labels: Vec<DriverClass> = (0..24)
            .map(|i| DriverClass::from_index(i % 4).unwrap())
            .collect();
        let tree = DecisionTree::fit(&rows, &labels, None, 1).unwrap();
        for (row, &label) in rows.iter().zip(&labels) {
            assert_eq!(tree.predict(row), label);
        }
    }

    #[test]
    fn depth_limit_is_respected() {
        let rows: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64]).collect();
        let labels: Vec<DriverClass> = (0..64)
            .map(|i| DriverClass::from_index(i % 4).unwrap())
            .collect();
        let tree = DecisionTree::fit(&rows, &labels, Some(3), 1).unwrap();
        assert!(tree.depth() <= 3);
    }

    #[test]
    fn min_samples_leaf_blocks_tiny_splits() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let mut labels = vec![Plantation; 10];
        labels[9] = Other; // one outlier
        let tree = DecisionTree::fit(&rows, &labels, None, 5).unwrap();
        // isolating the outlier needs a leaf of size 1 < 5
        assert_eq!(tree.predict(&[9.0]), Plantation);
    }

    #[test]
    fn separable_blobs_split_cleanly() {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            rows.push(vec![i as f64 * 0.1, 0.0]);
            labels.push(Plantation);
            rows.push(vec![10.0 + i as f64 * 0.1, 0.0]);
            labels.push(Other);
        }
        let tree = DecisionTree::fit(&rows, &labels, Some(2), 1).unwrap();
        assert_eq!(tree.predict(&[0.5, 0.0]), Plantation);
        assert_eq!(tree.predict(&[10.5, 0.0]), Other);
    }
}
