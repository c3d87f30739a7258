//! The masked segmentation loss stack: focal loss, generalized dice
//! loss, their convex combination, and the region-level classification
//! cross-entropy. Losses are computed only over pixels inside the forest
//! loss region; an empty mask signals "skip this example" (no loss, no
//! gradient) rather than an error.
//!
//! Every function returns both the value and its exact gradient with
//! respect to the per-pixel logits, so the training step assembles one
//! combined gradient tensor per batch.

use serde::{Deserialize, Serialize};

use crate::segnet::N_CLASSES;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Focal focusing parameter; 0 reduces to masked cross-entropy.
    pub gamma: f64,
    /// Weight of the focal term in the convex combination with dice.
    pub lambda: f64,
    /// Weight of the classification cross-entropy in the total.
    pub beta: f64,
    /// Dice smoothing constant.
    pub dice_eps: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            lambda: 0.5,
            beta: 1.0,
            dice_eps: 1e-6,
        }
    }
}

const P_FLOOR: f64 = 1e-12;

/// Per-pixel softmax over `[N_CLASSES, n_pixels]` logits (class-major).
pub fn softmax_probs(logits: &[f64], n_pixels: usize) -> Vec<f64> {
    let mut probs = vec![0.0; logits.len()];
    for i in 0..n_pixels {
        let mut max = f64::NEG_INFINITY;
        for c in 0..N_CLASSES {
            max = max.max(logits[c * n_pixels + i]);
        }
        let mut denom = 0.0;
        for c in 0..N_CLASSES {
            denom += (logits[c * n_pixels + i] - max).exp();
        }
        for c in 0..N_CLASSES {
            probs[c * n_pixels + i] = (logits[c * n_pixels + i] - max).exp() / denom;
        }
    }
    probs
}

/// Masked focal loss: mean over masked pixels of `-(1 - p_y)^g ln p_y`.
/// Returns `None` when the mask is empty (skip-example semantics).
/// The gradient is with respect to the logits, chained through softmax.
pub fn focal_loss(
    logits: &[f64],
    targets: &[u8],
    mask: &[bool],
    gamma: f64,
) -> Option<(f64, Vec<f64>)> {
    let n_pixels = mask.len();
    debug_assert_eq!(logits.len(), N_CLASSES * n_pixels);
    let m = mask.iter().filter(|&&b| b).count();
    if m == 0 {
        return None;
    }
    let probs = softmax_probs(logits, n_pixels);
    let mut loss = 0.0;
    let mut dlogits = vec![0.0; logits.len()];
    let inv_m = 1.0 / m as f64;

    for i in 0..n_pixels {
        if !mask[i] {
            continue;
        }
        let y = targets[i] as usize;
        let p = probs[y * n_pixels + i].max(P_FLOOR);
        let one_minus = 1.0 - p;
        loss += -(one_minus.powf(gamma)) * p.ln() * inv_m;
        // d/dp of -(1-p)^g ln p, then through the softmax Jacobian
        let df_dp = if gamma == 0.0 {
            -1.0 / p
        } else {
            gamma * one_minus.powf(gamma - 1.0) * p.ln() - one_minus.powf(gamma) / p
        };
        for c in 0..N_CLASSES {
            let pc = probs[c * n_pixels + i];
            let dp_dz = if c == y { p * (1.0 - pc) } else { -p * pc };
            dlogits[c * n_pixels + i] += df_dp * dp_dz * inv_m;
        }
    }
    Some((loss, dlogits))
}

/// Masked generalized dice loss:
/// `1 - 2 * sum_c w_c sum_i p_ci g_ci / sum_c w_c sum_i (p_ci + g_ci)`
/// over masked pixels, with `w_c = 1 / (sum_i g_ci + eps)^2`. Classes
/// absent from the target get weight zero, which keeps the perfect
/// prediction at loss ~0 and the uniform single-class case in closed
/// form. Value is in [0, 1]. `None` for an empty mask.
pub fn gdice_loss(
    logits: &[f64],
    targets: &[u8],
    mask: &[bool],
    eps: f64,
) -> Option<(f64, Vec<f64>)> {
    let n_pixels = mask.len();
    debug_assert_eq!(logits.len(), N_CLASSES * n_pixels);
    if !mask.iter().any(|&b| b) {
        return None;
    }
    let probs = softmax_probs(logits, n_pixels);

    let mut class_mass = [0.0f64; N_CLASSES];
    for i in 0..n_pixels {
        if mask[i] {
            class_mass[targets[i] as usize] += 1.0;
        }
    }
    let mut weights = [0.0f64; N_CLASSES];
    for c in 0..N_CLASSES {
        if class_mass[c] > 0.0 {
            weights[c] = 1.0 / (class_mass[c] + eps).powi(2);
        }
    }

    let mut numer = 0.0;
    let mut denom = 0.0;
    for i in 0..n_pixels {
        if !mask[i] {
            continue;
        }
        let y = targets[i] as usize;
        for c in 0..N_CLASSES {
            let p = probs[c * n_pixels + i];
            let g = if c == y { 1.0 } else { 0.0 };
            numer += weights[c] * p * g;
            denom += weights[c] * (p + g);
        }
    }
    let loss = 1.0 - 2.0 * numer / denom;

    // dL/dp_ci = -2 (w_c g_ci D - N w_c) / D^2 on masked pixels, then
    // through the per-pixel softmax Jacobian.
    let mut dlogits = vec![0.0; logits.len()];
    let d2 = denom * denom;
    for i in 0..n_pixels {
        if !mask[i] {
            continue;
        }
        let y = targets[i] as usize;
        let mut dl_dp = [0.0f64; N_CLASSES];
        for c in 0..N_CLASSES {
            let g = if c == y { 1.0 } else { 0.0 };
            dl_dp[c] = -2.0 * weights[c] * (g * denom - numer) / d2;
        }
        let mut dot = 0.0;
        for c in 0..N_CLASSES {
            dot += dl_dp[c] * probs[c * n_pixels + i];
        }
        for c in 0..N_CLASSES {
            let p = probs[c * n_pixels + i];
            dlogits[c * n_pixels + i] += p * (dl_dp[c] - dot);
        }
    }
    Some((loss, dlogits))
}

/// Softmax cross-entropy over 4 class scores, with its gradient.
pub fn classification_ce(scores: &[f64; N_CLASSES], label: usize) -> (f64, [f64; N_CLASSES]) {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut denom = 0.0;
    for s in scores {
        denom += (s - max).exp();
    }
    let log_denom = denom.ln() + max;
    let loss = log_denom - scores[label];
    let mut grad = [0.0; N_CLASSES];
    for c in 0..N_CLASSES {
        grad[c] = (scores[c] - log_denom).exp() - if c == label { 1.0 } else { 0.0 };
    }
    (loss, grad)
}

/// Mean of the per-pixel logits over the masked region: the vector the
/// classification head consumes. `None` when the mask is empty.
pub fn masked_mean_logits(
    logits: &[f64],
    mask: &[bool],
    n_pixels: usize,
) -> Option<[f64; N_CLASSES]> {
    let m = mask.iter().filter(|&&b| b).count();
    if m == 0 {
        return None;
    }
    let mut out = [0.0; N_CLASSES];
    for (c, slot) in out.iter_mut().enumerate() {
        let plane = &logits[c * n_pixels..(c + 1) * n_pixels];
        let mut acc = 0.0;
        for i in 0..n_pixels {
            if mask[i] {
                acc += plane[i];
            }
        }
        *slot = acc / m as f64;
    }
    Some(out)
}

/// The segmentation part of the total loss for one example:
/// `lambda * focal + (1 - lambda) * gdice`, with the combined logit
/// gradient. `None` for an empty mask.
pub fn segmentation_loss(
    logits: &[f64],
    targets: &[u8],
    mask: &[bool],
    config: &LossConfig,
) -> Option<(f64, Vec<f64>)> {
    let (focal, d_focal) = focal_loss(logits, targets, mask, config.gamma)?;
    let (dice, d_dice) = gdice_loss(logits, targets, mask, config.dice_eps)?;
    let loss = config.lambda * focal + (1.0 - config.lambda) * dice;
    let grad = d_focal
        .iter()
        .zip(&d_dice)
        .map(|(f, d)| config.lambda * f + (1.0 - config.lambda) * d)
        .collect();
    Some((loss, grad))
}
