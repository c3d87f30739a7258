//! Linear baselines: multinomial logistic regression trained by gradient
//! descent, and a one-vs-rest ridge classifier solved in closed form.

use forest_core::DriverClass;
use serde::{Deserialize, Serialize};

use crate::{BaselineError, Result};

pub const N_CLASSES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Norm {
    L1,
    L2,
}

/// Multinomial logistic regression: softmax cross-entropy plus an L1 or
/// L2 penalty on the weights (bias unpenalized). L2 enters the gradient;
/// L1 is applied as a proximal soft-threshold after each step. Training
/// is full-batch gradient descent from zero initialization, so fitting
/// is deterministic without any seed.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    /// Row-major [N_CLASSES x (d + 1)]; the last column is the bias.
    pub weights: Vec<f64>,
    pub n_features: usize,
}

const LOGISTIC_ITERS: usize = 400;
const LOGISTIC_LR: f64 = 0.5;

impl LogisticModel {
    pub fn fit(
        rows: &[Vec<f64>],
        labels: &[DriverClass],
        strength: f64,
        norm: Norm,
    ) -> Result<Self> {
        let d = rows.first().map(|r| r.len()).ok_or(BaselineError::EmptyTrainingSet)?;
        let mut weights = vec![0.0; N_CLASSES * (d + 1)];
        let mut grad = vec![0.0; weights.len()];
        for _ in 0..LOGISTIC_ITERS {
            let l2 = if norm == Norm::L2 { strength } else { 0.0 };
            logistic_grad_into(&weights, rows, labels, l2, &mut grad);
            for (w, g) in weights.iter_mut().zip(&grad) {
                *w -= LOGISTIC_LR * g;
            }
            if norm == Norm::L1 {
                let tau = LOGISTIC_LR * strength;
                for c in 0..N_CLASSES {
                    for j in 0..d {
                        // bias (column d) stays unpenalized
                        let w = &mut weights[c * (d + 1) + j];
                        *w = w.signum() * (w.abs() - tau).max(0.0);
                    }
                }
            }
        }
        Ok(Self {
            weights,
            n_features: d,
        })
    }

    pub fn scores(&self, row: &[f64]) -> [f64; N_CLASSES] {
        let d = self.n_features;
        let mut out = [0.0; N_CLASSES];
        for (c, slot) in out.iter_mut().enumerate() {
            let w = &self.weights[c * (d + 1)..(c + 1) * (d + 1)];
            let mut acc = w[d];
            for j in 0..d {
                acc += w[j] * row[j];
            }
            *slot = acc;
        }
        out
    }

    pub fn predict(&self, row: &[f64]) -> DriverClass {
        argmax_class(&self.scores(row))
    }
}

/// Mean softmax cross-entropy over the rows plus `l2 * ||W||^2` (bias
/// excluded), with its exact gradient. Exposed so finite differences can
/// audit the gradient.
pub fn logistic_loss_and_grad(
    weights: &[f64],
    rows: &[Vec<f64>],
    labels: &[DriverClass],
    l2: f64,
) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; weights.len()];
    let loss = logistic_loss_grad_impl(weights, rows, labels, l2, Some(&mut grad));
    (loss, grad)
}

fn logistic_grad_into(
    weights: &[f64],
    rows: &[Vec<f64>],
    labels: &[DriverClass],
    l2: f64,
    grad: &mut [f64],
) {
    grad.fill(0.0);
    logistic_loss_grad_impl(weights, rows, labels, l2, Some(grad));
}

fn logistic_loss_grad_impl(
    weights: &[f64],
    rows: &[Vec<f64>],
    labels: &[DriverClass],
    l2: f64,
    mut grad: Option<&mut [f64]>,
) -> f64 {
    let n = rows.len() as f64;
    let d = rows[0].len();
    let mut loss = 0.0;
    for (row, &label) in rows.iter().zip(labels) {
        let mut scores = [0.0f64; N_CLASSES];
        for (c, slot) in scores.iter_mut().enumerate() {
            let w = &weights[c * (d + 1)..(c + 1) * (d + 1)];
            let mut acc = w[d];
            for j in 0..d {
                acc += w[j] * row[j];
            }
            *slot = acc;
        }
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for s in &scores {
            denom += (s - max).exp();
        }
        let log_denom = denom.ln() + max;
        loss += (log_denom - scores[label.index()]) / n;

        if let Some(grad) = grad.as_deref_mut() {
            for c in 0..N_CLASSES {
                let p = (scores[c] - log_denom).exp();
                let delta = p - if c == label.index() { 1.0 } else { 0.0 };
                let g = &mut grad[c * (d + 1)..(c + 1) * (d + 1)];
                for j in 0..d {
                    g[j] += delta * row[j] / n;
                }
                g[d] += delta / n;
            }
        }
    }
    if l2 > 0.0 {
        for c in 0..N_CLASSES {
            for j in 0..d {
                let w = weights[c * (d + 1) + j];
                loss += l2 * w * w;
                if let Some(grad) = grad.as_deref_mut() {
                    grad[c * (d + 1) + j] += 2.0 * l2 * w;
                }
            }
        }
    }
    loss
}

/// One-vs-rest ridge classifier: for each class, least squares on +/-1
/// targets with an L2 penalty, solved in closed form from the normal
/// equations `(X^T X + lambda I) w = X^T y`. `lambda > 0` keeps the
/// system positive definite, so the Cholesky solve cannot fail.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    /// Row-major [N_CLASSES x (d + 1)]; the last column is the bias.
    pub weights: Vec<f64>,
    pub n_features: usize,
    pub strength: f64,
}

impl RidgeModel {
    pub fn fit(rows: &[Vec<f64>], labels: &[DriverClass], strength: f64) -> Result<Self> {
        if strength <= 0.0 {
            return Err(BaselineError::BadRows);
        }
        let d = rows.first().map(|r| r.len()).ok_or(BaselineError::EmptyTrainingSet)?;
        let dim = d + 1;

        // Gram matrix over the bias-augmented design.
        let mut gram = vec![0.0f64; dim * dim];
        for row in rows {
            for i in 0..dim {
                let xi = if i < d { row[i] } else { 1.0 };
                for j in i..dim {
                    let xj = if j < d { row[j] } else { 1.0 };
                    gram[i * dim + j] += xi * xj;
                }
            }
        }
        for i in 0..dim {
            for j in 0..i {
                gram[i * dim + j] = gram[j * dim + i];
            }
            gram[i * dim + i] += strength;
        }
        let chol = cholesky(&gram, dim)
            .expect("lambda > 0 makes the regularized Gram matrix positive definite");

        let mut weights = vec![0.0; N_CLASSES * dim];
        for c in 0..N_CLASSES {
            let mut rhs = vec![0.0f64; dim];
            for (row, &label) in rows.iter().zip(labels) {
                let y = if label.index() == c { 1.0 } else { -1.0 };
                for i in 0..dim {
                    let xi = if i < d { row[i] } else { 1.0 };
                    rhs[i] += xi * y;
                }
            }
            let w = chol_solve(&chol, dim, &rhs);
            weights[c * dim..(c + 1) * dim].copy_from_slice(&w);
        }
        Ok(Self {
            weights,
            n_features: d,
            strength,
        })
    }

    pub fn scores(&self, row: &[f64]) -> [f64; N_CLASSES] {
        let d = self.n_features;
        let mut out = [0.0; N_CLASSES];
        for (c, slot) in out.iter_mut().enumerate() {
            let w = &self.weights[c * (d + 1)..(c + 1) * (d + 1)];
            let mut acc = w[d];
            for j in 0..d {
                acc += w[j] * row[j];
            }
            *slot = acc;
        }
        out
    }

    pub fn predict(&self, row: &[f64]) -> DriverClass {
        argmax_class(&self.scores(row))
    }

    /// Max relative residual of the normal equations across the four
    /// one-vs-rest systems; the closed-form solution should sit at
    /// machine-precision level.
    pub fn normal_equation_residual(&self, rows: &[Vec<f64>], labels: &[DriverClass]) -> f64 {
        let d = self.n_features;
        let dim = d + 1;
        let mut worst = 0.0f64;
        for c in 0..N_CLASSES {
            let w = &self.weights[c * dim..(c + 1) * dim];
            // b = X^T y, a = (X^T X + lambda I) w
            let mut b = vec![0.0f64; dim];
            let mut a = vec![0.0f64; dim];
            for (row, &label) in rows.iter().zip(labels) {
                let y = if label.index() == c { 1.0 } else { -1.0 };
                let mut xw = w[d];
                for j in 0..d {
                    xw += row[j] * w[j];
                }
                for i in 0..dim {
                    let xi = if i < d { row[i] } else { 1.0 };
                    b[i] += xi * y;
                    a[i] += xi * xw;
                }
            }
            for i in 0..dim {
                a[i] += self.strength * w[i];
            }
            let num: f64 = a
                .iter()
                .zip(&b)
                .map(|(ai, bi)| (ai - bi) * (ai - bi))
                .sum::<f64>()
                .sqrt();
            let den: f64 = b.iter().map(|bi| bi * bi).sum::<f64>().sqrt().max(1e-300);
            worst = worst.max(num / den);
        }
        worst
    }
}

pub(crate) fn argmax_class(scores: &[f64; N_CLASSES]) -> DriverClass {
    let mut best = 0usize;
    for c in 1..N_CLASSES {
        if scores[c] > scores[best] {
            best = c;
        }
    }
    DriverClass::from_index(best).unwrap()
}

/// Lower-triangular Cholesky factor of a symmetric positive definite
/// matrix (row-major), or `None` if a pivot collapses.
fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn chol_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    // forward: L z = b
    let mut z = vec![0.0f64; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * z[k];
        }
        z[i] = sum / l[i * n + i];
    }
    // backward: L^T x = z
    let mut x = vec![0.0f64; n];
    for i in (0..n).rev() {
        let mut sum = z[i];
        for k in i + 1..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    x
}
