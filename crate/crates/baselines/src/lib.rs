//! Classical baselines for driver classification, implemented from
//! scratch: CART decision tree, random forest, multinomial logistic
//! regression, one-vs-rest ridge classifier, k-nearest neighbors, and a
//! small MLP. Each supports a pixel-based variant (per-pixel rows, mode
//! prediction over the region) and a region-based variant (one aggregated
//! row per event), with 3-fold cross-validation tuning by event.

mod forest;
mod knn;
mod linear;
mod mlp;
mod serialize;
mod tree;
mod tune;

pub use forest::RandomForest;
pub use knn::KnnModel;
pub use linear::{logistic_loss_and_grad, LogisticModel, Norm, RidgeModel};
pub use mlp::MlpModel;
pub use serialize::{load_model, save_model, ModelSidecar};
pub use tree::DecisionTree;
pub use tune::{tune_cv, CvOutcome, HyperGrid};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use forest_core::DriverClass;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("ragged or empty feature rows")]
    BadRows,
    #[error("fold construction failed: {0}")]
    FoldError(String),
    #[error("hyperparameters do not match the model kind")]
    HyperparamMismatch,
    #[error("model file corrupt: {0}")]
    CorruptModel(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("eval: {0}")]
    Eval(#[from] forest_eval::EvalError),
}

pub type Result<T> = std::result::Result<T, BaselineError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    DecisionTree,
    RandomForest,
    LogisticRegression,
    RidgeClassifier,
    KNearestNeighbor,
    MultiLayerPerceptron,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 6] = [
        BaselineKind::DecisionTree,
        BaselineKind::RandomForest,
        BaselineKind::LogisticRegression,
        BaselineKind::RidgeClassifier,
        BaselineKind::KNearestNeighbor,
        BaselineKind::MultiLayerPerceptron,
    ];
}

/// Pixel models train on per-pixel rows inside the loss regions and
/// classify a region by the mode of its pixel predictions; region models
/// train on one aggregated row per event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineVariant {
    Pixel,
    Region,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hyperparams {
    Tree {
        max_depth: Option<usize>,
        min_samples_leaf: usize,
    },
    Forest {
        max_depth: Option<usize>,
        min_samples_leaf: usize,
        n_trees: usize,
    },
    Logistic {
        strength: f64,
        norm: Norm,
    },
    Ridge {
        strength: f64,
    },
    Knn {
        k: usize,
    },
    Mlp {
        hidden_layers: usize,
        neurons: usize,
        learning_rate: f64,
    },
}

/// A fitted baseline of any kind.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Tree(DecisionTree),
    Forest(RandomForest),
    Logistic(LogisticModel),
    Ridge(RidgeModel),
    Knn(KnnModel),
    Mlp(MlpModel),
}

impl FittedModel {
    pub fn kind(&self) -> BaselineKind {
        match self {
            FittedModel::Tree(_) => BaselineKind::DecisionTree,
            FittedModel::Forest(_) => BaselineKind::RandomForest,
            FittedModel::Logistic(_) => BaselineKind::LogisticRegression,
            FittedModel::Ridge(_) => BaselineKind::RidgeClassifier,
            FittedModel::Knn(_) => BaselineKind::KNearestNeighbor,
            FittedModel::Mlp(_) => BaselineKind::MultiLayerPerceptron,
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> DriverClass {
        match self {
            FittedModel::Tree(m) => m.predict(row),
            FittedModel::Forest(m) => m.predict(row),
            FittedModel::Logistic(m) => m.predict(row),
            FittedModel::Ridge(m) => m.predict(row),
            FittedModel::Knn(m) => m.predict(row),
            FittedModel::Mlp(m) => m.predict(row),
        }
    }
}

fn validate_rows(rows: &[Vec<f64>], labels: &[DriverClass]) -> Result<usize> {
    if rows.is_empty() || rows.len() != labels.len() {
        return Err(BaselineError::EmptyTrainingSet);
    }
    let d = rows[0].len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(BaselineError::BadRows);
    }
    Ok(d)
}

/// Fits a baseline. Deterministic given identical inputs and `seed`.
/// Linear and MLP kinds expect standardized rows.
pub fn fit(
    kind: BaselineKind,
    rows: &[Vec<f64>],
    labels: &[DriverClass],
    hp: &Hyperparams,
    seed: u64,
) -> Result<FittedModel> {
    validate_rows(rows, labels)?;
    match (kind, hp) {
        (BaselineKind::DecisionTree, Hyperparams::Tree { max_depth, min_samples_leaf }) => Ok(
            FittedModel::Tree(DecisionTree::fit(rows, labels, *max_depth, *min_samples_leaf)?),
        ),
        (
            BaselineKind::RandomForest,
            Hyperparams::Forest {
                max_depth,
                min_samples_leaf,
                n_trees,
            },
        ) => Ok(FittedModel::Forest(RandomForest::fit(
            rows,
            labels,
            *n_trees,
            *max_depth,
            *min_samples_leaf,
            true,
            true,
            seed,
        )?)),
        (BaselineKind::LogisticRegression, Hyperparams::Logistic { strength, norm }) => Ok(
            FittedModel::Logistic(LogisticModel::fit(rows, labels, *strength, *norm)?),
        ),
        (BaselineKind::RidgeClassifier, Hyperparams::Ridge { strength }) => {
            Ok(FittedModel::Ridge(RidgeModel::fit(rows, labels, *strength)?))
        }
        (BaselineKind::KNearestNeighbor, Hyperparams::Knn { k }) => {
            Ok(FittedModel::Knn(KnnModel::fit(rows, labels, *k)?))
        }
        (
            BaselineKind::MultiLayerPerceptron,
            Hyperparams::Mlp {
                hidden_layers,
                neurons,
                learning_rate,
            },
        ) => Ok(FittedModel::Mlp(MlpModel::fit(
            rows,
            labels,
            *hidden_layers,
            *neurons,
            *learning_rate,
            seed,
        )?)),
        _ => Err(BaselineError::HyperparamMismatch),
    }
}

/// Region-level classification: pixel variant reduces per-pixel
/// predictions by mode (ties resolve in canonical class order); region
/// variant predicts from the single aggregated row.
pub fn predict_region(
    model: &FittedModel,
    variant: BaselineVariant,
    event_rows: &[Vec<f64>],
) -> Result<DriverClass> {
    if event_rows.is_empty() {
        return Err(BaselineError::BadRows);
    }
    match variant {
        BaselineVariant::Region => Ok(model.predict_row(&event_rows[0])),
        BaselineVariant::Pixel => {
            let mut votes = [0usize; 4];
            for row in event_rows {
                votes[model.predict_row(row).index()] += 1;
            }
            Ok(mode_class(&votes))
        }
    }
}

/// Majority class with ties resolved toward the canonical (lowest index)
/// class.
pub(crate) fn mode_class(votes: &[usize; 4]) -> DriverClass {
    let mut best = 0usize;
    for c in 1..4 {
        if votes[c] > votes[best] {
            best = c;
        }
    }
    DriverClass::from_index(best).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use DriverClass::*;

    #[test]
    fn mode_prediction_majority_and_tie() {
        // {P, P, S} -> P
        assert_eq!(mode_class(&[2, 1, 0, 0]), Plantation);
        // {P, S} tie -> canonical order picks P
        assert_eq!(mode_class(&[1, 1, 0, 0]), Plantation);
        // {S, G} tie -> S precedes G
        assert_eq!(mode_class(&[0, 1, 1, 0]), SmallholderAgriculture);
    }

    #[test]
    fn region_variant_is_passthrough() {
        let rows = vec![vec![0.0, 0.0], vec![10.0, 10.0]];
        let labels = vec![Plantation, Other];
        let model = fit(
            BaselineKind::KNearestNeighbor,
            &rows,
            &labels,
            &Hyperparams::Knn { k: 1 },
            0,
        )
        .unwrap();
        let pred = predict_region(&model, BaselineVariant::Region, &[vec![9.0, 9.0]]).unwrap();
        assert_eq!(pred, Other);
    }

    #[test]
    fn mismatched_hyperparams_rejected() {
        let rows = vec![vec![0.0]];
        let labels = vec![Plantation];
        assert!(matches!(
            fit(
                BaselineKind::DecisionTree,
                &rows,
                &labels,
                &Hyperparams::Knn { k: 1 },
                0
            ),
            Err(BaselineError::HyperparamMismatch)
        ));
    }
}
