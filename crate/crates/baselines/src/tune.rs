//! 3-fold cross-validation hyperparameter tuning.
//!
//! Folds are partitioned by event id, never by row, so pixel-variant
//! models cannot leak a region's pixels across folds.

use std::collections::BTreeMap;

use forest_core::DriverClass;
use forest_eval::macro_f1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{fit, predict_region, BaselineError, BaselineKind, BaselineVariant, Hyperparams, Norm, Result};

pub const N_FOLDS: usize = 3;

/// Default tuning grids per model family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperGrid {
    pub max_depth: Vec<Option<usize>>,
    pub min_samples_leaf: Vec<usize>,
    pub n_trees: Vec<usize>,
    pub strength: Vec<f64>,
    pub norms: Vec<Norm>,
    pub k: Vec<usize>,
    pub hidden_layers: Vec<usize>,
    pub neurons: Vec<usize>,
    pub learning_rate: Vec<f64>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            max_depth: vec![Some(4), Some(8), Some(16), None],
            min_samples_leaf: vec![1, 5, 20],
            n_trees: vec![100, 200],
            strength: vec![0.01, 0.1, 1.0, 10.0],
            norms: vec![Norm::L1, Norm::L2],
            k: vec![1, 5, 15, 51],
            hidden_layers: vec![1, 2],
            neurons: vec![32, 128],
            learning_rate: vec![1e-2, 1e-3],
        }
    }
}

impl HyperGrid {
    /// Grid points for one model kind, in deterministic iteration order
    /// (ties during tuning resolve to the earliest point).
    pub fn points(&self, kind: BaselineKind) -> Vec<Hyperparams> {
        let mut out = Vec::new();
        match kind {
            BaselineKind::DecisionTree => {
                for &max_depth in &self.max_depth {
                    for &min_samples_leaf in &self.min_samples_leaf {
                        out.push(Hyperparams::Tree {
                            max_depth,
                            min_samples_leaf,
                        });
                    }
                }
            }
            BaselineKind::RandomForest => {
                for &max_depth in &self.max_depth {
                    for &min_samples_leaf in &self.min_samples_leaf {
                        for &n_trees in &self.n_trees {
                            out.push(Hyperparams::Forest {
                                max_depth,
                                min_samples_leaf,
                                n_trees,
                            });
                        }
                    }
                }
            }
            BaselineKind::LogisticRegression => {
                for &strength in &self.strength {
                    for &norm in &self.norms {
                        out.push(Hyperparams::Logistic { strength, norm });
                    }
                }
            }
            BaselineKind::RidgeClassifier => {
                for &strength in &self.strength {
                    out.push(Hyperparams::Ridge { strength });
                }
            }
            BaselineKind::KNearestNeighbor => {
                for &k in &self.k {
                    out.push(Hyperparams::Knn { k });
                }
            }
            BaselineKind::MultiLayerPerceptron => {
                for &hidden_layers in &self.hidden_layers {
                    for &neurons in &self.neurons {
                        for &learning_rate in &self.learning_rate {
                            out.push(Hyperparams::Mlp {
                                hidden_layers,
                                neurons,
                                learning_rate,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub best: Hyperparams,
    /// Mean fold macro-F1 per grid point, in grid order.
    pub scores: Vec<f64>,
}

/// Evaluates every grid point by mean macro-F1 over 3 event-level folds
/// and returns the argmax (first point on ties).
pub fn tune_cv(
    kind: BaselineKind,
    variant: BaselineVariant,
    rows: &[Vec<f64>],
    labels: &[DriverClass],
    event_ids: &[String],
    grid: &HyperGrid,
    seed: u64,
) -> Result<CvOutcome> {
    if rows.len() != labels.len() || rows.len() != event_ids.len() {
        return Err(BaselineError::BadRows);
    }
    // Unique events in first-appearance order, with their row indices and
    // region label.
    let mut event_rows: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut event_order: Vec<&str> = Vec::new();
    for (i, id) in event_ids.iter().enumerate() {
        let entry = event_rows.entry(id.as_str()).or_default();
        if entry.is_empty() {
            event_order.push(id.as_str());
        }
        entry.push(i);
    }
    if event_order.len() < N_FOLDS {
        return Err(BaselineError::FoldError(format!(
            "{} events cannot form {N_FOLDS} folds",
            event_order.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = event_order.clone();
    shuffled.shuffle(&mut rng);
    let folds: Vec<Vec<&str>> = (0..N_FOLDS)
        .map(|f| {
            shuffled
                .iter()
                .enumerate()
                .filter(|(i, _)| i % N_FOLDS == f)
                .map(|(_, &id)| id)
                .collect()
        })
        .collect();

    // Every fold's training side must contain all four classes.
    for (f, fold) in folds.iter().enumerate() {
        let mut present = [false; 4];
        for id in &shuffled {
            if fold.contains(id) {
                continue;
            }
            let first_row = event_rows[id][0];
            present[labels[first_row].index()] = true;
        }
        if present.iter().any(|&p| !p) {
            return Err(BaselineError::FoldError(format!(
                "training side of fold {f} is missing a class"
            )));
        }
    }

    let points = grid.points(kind);
    let mut scores = Vec::with_capacity(points.len());
    for hp in &points {
        let mut fold_scores = Vec::with_capacity(N_FOLDS);
        for fold in &folds {
            let holdout: std::collections::HashSet<&str> = fold.iter().copied().collect();
            let mut train_rows = Vec::new();
            let mut train_labels = Vec::new();
            for id in &shuffled {
                if holdout.contains(id) {
                    continue;
                }
                for &i in &event_rows[id] {
                    train_rows.push(rows[i].clone());
                    train_labels.push(labels[i]);
                }
            }
            let model = fit(kind, &train_rows, &train_labels, hp, seed)?;
            let mut pairs = Vec::with_capacity(fold.len());
            for id in fold {
                let idx = &event_rows[id];
                let ev_rows: Vec<Vec<f64>> = idx.iter().map(|&i| rows[i].clone()).collect();
                let pred = predict_region(&model, variant, &ev_rows)?;
                pairs.push((labels[idx[0]], pred));
            }
            fold_scores.push(macro_f1(&pairs)?);
        }
        scores.push(fold_scores.iter().sum::<f64>() / N_FOLDS as f64);
    }

    let mut best_idx = 0usize;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best_idx] {
            best_idx = i;
        }
    }
    Ok(CvOutcome {
        best: points[best_idx].clone(),
        scores,
    })
}
