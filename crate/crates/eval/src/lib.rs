//! Evaluation metrics for four-class driver classification: accuracy,
//! per-class precision/recall/F1, macro averages, confusion matrices, and
//! report rendering (JSON + PNG heatmaps).

mod render;

pub use render::{render_class_map, render_confusion_png, render_report};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use forest_core::DriverClass;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no prediction pairs to evaluate")]
    Empty,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("image encode: {0}")]
    Image(#[from] image::ImageError),
}

/// 4x4 integer counts; rows are the true class, columns the predicted
/// class, both in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 4]; 4],
}

impl ConfusionMatrix {
    pub fn from_pairs(pairs: &[(DriverClass, DriverClass)]) -> Self {
        let mut counts = [[0u64; 4]; 4];
        for &(truth, pred) in pairs {
            counts[truth.index()][pred.index()] += 1;
        }
        Self { counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..4).map(|i| self.counts[i][i]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Full metrics report. Zero denominators yield 0 for the affected
/// precision/recall/F1 (documented convention); macro values are
/// unweighted means over the four classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub per_class: [ClassMetrics; 4],
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub confusion: ConfusionMatrix,
    /// Events excluded upstream (e.g. regions fully truncated by the
    /// center crop); listed, never silently dropped.
    #[serde(default)]
    pub excluded_events: Vec<String>,
}

/// Computes the report from `(true, predicted)` pairs.
pub fn compute_metrics(
    pairs: &[(DriverClass, DriverClass)],
) -> Result<MetricsReport, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    let confusion = ConfusionMatrix::from_pairs(pairs);
    Ok(metrics_from_confusion(confusion))
}

pub fn metrics_from_confusion(confusion: ConfusionMatrix) -> MetricsReport {
    let total = confusion.total();
    let accuracy = confusion.trace() as f64 / total as f64;

    let mut per_class = [ClassMetrics {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    }; 4];
    for c in 0..4 {
        let tp = confusion.counts[c][c] as f64;
        let fp: f64 = (0..4)
            .filter(|&r| r != c)
            .map(|r| confusion.counts[r][c] as f64)
            .sum();
        let fn_: f64 = (0..4)
            .filter(|&p| p != c)
            .map(|p| confusion.counts[c][p] as f64)
            .sum();
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class[c] = ClassMetrics {
            precision,
            recall,
            f1,
        };
    }

    MetricsReport {
        accuracy,
        per_class,
        macro_precision: per_class.iter().map(|m| m.precision).sum::<f64>() / 4.0,
        macro_recall: per_class.iter().map(|m| m.recall).sum::<f64>() / 4.0,
        macro_f1: per_class.iter().map(|m| m.f1).sum::<f64>() / 4.0,
        confusion,
        excluded_events: Vec::new(),
    }
}

/// Convenience: macro-F1 straight from pairs, used for checkpoint
/// selection and CV scoring.
pub fn macro_f1(pairs: &[(DriverClass, DriverClass)]) -> Result<f64, EvalError> {
    Ok(compute_metrics(pairs)?.macro_f1)
}
