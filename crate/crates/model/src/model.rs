//! The complete trainable model: segmentation network plus optional
//! fusion head, with the batched total-loss forward/backward step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use forest_core::DriverClass;

use crate::error::{ModelError, Result};
use crate::fusion::FusionHead;
use crate::layers::ParamVisitor;
use crate::loss::{
    classification_ce, masked_mean_logits, segmentation_loss, softmax_probs, LossConfig,
};
use crate::segnet::{SegNet, SegNetConfig, N_CLASSES};
use crate::tensor::Tensor;

/// How region scores are aggregated from per-pixel outputs at inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    /// Mean of the masked per-pixel logits (matches the training-time
    /// classification head).
    #[default]
    Logits,
    /// Mean of the masked per-pixel softmax probabilities.
    Probs,
}

/// One training example after augmentation and cropping.
#[derive(Debug, Clone)]
pub struct BatchExample {
    /// Standardized band stack, `[bands, size, size]`.
    pub image: Tensor,
    /// Per-pixel class indices (only masked pixels contribute).
    pub targets: Vec<u8>,
    pub mask: Vec<bool>,
    /// Standardized auxiliary features (required when fusion is on).
    pub aux: Option<Vec<f64>>,
    /// False when the crop truncated the whole region; such examples
    /// contribute exactly zero to the batch loss and gradient.
    pub usable: bool,
}

#[derive(Debug, Clone)]
pub struct SegModel {
    pub net: SegNet,
    pub fusion: Option<FusionHead>,
}

impl SegModel {
    pub fn new(
        config: SegNetConfig,
        fusion: Option<(usize, Vec<usize>, f64)>,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = SegNet::new(config, &mut rng);
        let fusion = fusion.map(|(aux_dim, hidden, dropout)| {
            FusionHead::new(aux_dim, &hidden, dropout, &mut rng)
        });
        Self { net, fusion }
    }

    pub fn visit_params(&mut self, v: &mut dyn ParamVisitor) {
        self.net.visit_params(v);
        if let Some(f) = &mut self.fusion {
            f.visit_params(v);
        }
    }

    pub fn zero_grads(&mut self) {
        self.visit_params(&mut |_: &str, _: &mut Tensor, g: &mut Tensor| g.fill(0.0));
    }

    pub fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |_: &str, p: &mut Tensor, _: &mut Tensor| n += p.numel());
        n
    }

    /// Snapshot of all parameters and normalization state, by name.
    pub fn export_tensors(&mut self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        self.visit_params(&mut |name: &str, p: &mut Tensor, _: &mut Tensor| {
            out.push((name.to_string(), p.clone()));
        });
        self.net.visit_state(&mut |name: &str, t: &mut Tensor| {
            out.push((name.to_string(), t.clone()));
        });
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    /// Loads matching-named, matching-shaped tensors; returns how many
    /// were applied. Mismatched entries are skipped, which is what lets a
    /// checkpoint trained on a different head initialize a new model.
    pub fn import_tensors(&mut self, tensors: &[(String, Tensor)]) -> usize {
        let lookup: std::collections::BTreeMap<&str, &Tensor> = tensors
            .iter()
            .map(|(n, t)| (n.as_str(), t))
            .collect();
        let mut applied = 0usize;
        self.visit_params(&mut |name: &str, p: &mut Tensor, _: &mut Tensor| {
            if let Some(t) = lookup.get(name) {
                if t.shape == p.shape {
                    p.data.copy_from_slice(&t.data);
                    applied += 1;
                }
            }
        });
        self.net.visit_state(&mut |name: &str, s: &mut Tensor| {
            if let Some(t) = lookup.get(name) {
                if t.shape == s.shape {
                    s.data.copy_from_slice(&t.data);
                    applied += 1;
                }
            }
        });
        applied
    }

    /// Forward + loss + backward over one batch. Returns the mean total
    /// loss over usable examples, or `None` when no example is usable.
    /// Gradients accumulate into the parameter buffers (call
    /// `zero_grads` first, then the optimizer step).
    pub fn train_step(
        &mut self,
        batch: &[BatchExample],
        loss_cfg: &LossConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Option<f64>> {
        let usable: Vec<&BatchExample> = batch.iter().filter(|e| e.usable).collect();
        if usable.is_empty() {
            return Ok(None);
        }
        let n = usable.len();
        let (bands, size_h, size_w) = {
            let s = &usable[0].image.shape;
            (s[0], s[1], s[2])
        };
        let mut x = Tensor::zeros(&[n, bands, size_h, size_w]);
        for (i, ex) in usable.iter().enumerate() {
            let start = i * bands * size_h * size_w;
            x.data[start..start + ex.image.numel()].copy_from_slice(&ex.image.data);
        }

        let logits = self.net.forward(&x, true)?;
        let n_pixels = size_h * size_w;
        let mut dlogits = Tensor::zeros(&logits.shape);
        let mut total = 0.0;
        let inv_n = 1.0 / n as f64;

        for (i, ex) in usable.iter().enumerate() {
            let ex_logits = &logits.data[i * N_CLASSES * n_pixels..(i + 1) * N_CLASSES * n_pixels];
            let Some((seg_loss, seg_grad)) =
                segmentation_loss(ex_logits, &ex.targets, &ex.mask, loss_cfg)
            else {
                // usable flag promised a nonempty mask
                return Err(ModelError::TrainingError(
                    "usable example with empty mask".into(),
                ));
            };
            let mean_logits = masked_mean_logits(ex_logits, &ex.mask, n_pixels)
                .expect("mask checked nonempty");
            let label = ex.targets[ex.mask.iter().position(|&b| b).unwrap()] as usize;

            let (class_loss, d_mean) = match &mut self.fusion {
                Some(head) => {
                    let aux = ex.aux.as_ref().ok_or_else(|| {
                        ModelError::TrainingError("fusion enabled but example has no aux".into())
                    })?;
                    if aux.len() != head.aux_dim {
                        return Err(ModelError::ShapeError(format!(
                            "aux length {} does not match fusion head input {}",
                            aux.len(),
                            head.aux_dim
                        )));
                    }
                    let mut input = Vec::with_capacity(N_CLASSES + aux.len());
                    input.extend_from_slice(&mean_logits);
                    input.extend_from_slice(aux);
                    let scores = head.forward(&input, true, rng);
                    let (loss, d_scores) = classification_ce(&scores, label);
                    let mut scaled = d_scores;
                    for d in &mut scaled {
                        *d *= loss_cfg.beta * inv_n;
                    }
                    let d_input = head.backward(&scaled);
                    (loss, [d_input[0], d_input[1], d_input[2], d_input[3]])
                }
                None => {
                    let (loss, d_scores) = classification_ce(&mean_logits, label);
                    let mut scaled = d_scores;
                    for d in &mut scaled {
                        *d *= loss_cfg.beta * inv_n;
                    }
                    (loss, scaled)
                }
            };

            total += (seg_loss + loss_cfg.beta * class_loss) * inv_n;

            // assemble this example's logit gradient
            let m = ex.mask.iter().filter(|&&b| b).count() as f64;
            let dex = &mut dlogits.data
                [i * N_CLASSES * n_pixels..(i + 1) * N_CLASSES * n_pixels];
            for c in 0..N_CLASSES {
                let spread = d_mean[c] / m;
                for p in 0..n_pixels {
                    let mut g = seg_grad[c * n_pixels + p] * inv_n;
                    if ex.mask[p] {
                        g += spread;
                    }
                    dex[c * n_pixels + p] = g;
                }
            }
        }

        if !total.is_finite() {
            return Err(ModelError::NumericalError("batch loss".into()));
        }
        self.net.backward(&dlogits);
        Ok(Some(total))
    }

    /// Loss only (no backward, no running-stat side effects beyond batch
    /// normalization's train-mode semantics). Used by the finite
    /// difference audit.
    pub fn loss_only(
        &mut self,
        batch: &[BatchExample],
        loss_cfg: &LossConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Option<f64>> {
        let usable: Vec<&BatchExample> = batch.iter().filter(|e| e.usable).collect();
        if usable.is_empty() {
            return Ok(None);
        }
        let n = usable.len();
        let (bands, size_h, size_w) = {
            let s = &usable[0].image.shape;
            (s[0], s[1], s[2])
        };
        let mut x = Tensor::zeros(&[n, bands, size_h, size_w]);
        for (i, ex) in usable.iter().enumerate() {
            let start = i * bands * size_h * size_w;
            x.data[start..start + ex.image.numel()].copy_from_slice(&ex.image.data);
        }
        let logits = self.net.forward(&x, true)?;
        let n_pixels = size_h * size_w;
        let inv_n = 1.0 / n as f64;
        let mut total = 0.0;
        for (i, ex) in usable.iter().enumerate() {
            let ex_logits = &logits.data[i * N_CLASSES * n_pixels..(i + 1) * N_CLASSES * n_pixels];
            let (seg_loss, _) = segmentation_loss(ex_logits, &ex.targets, &ex.mask, loss_cfg)
                .expect("usable mask");
            let mean_logits = masked_mean_logits(ex_logits, &ex.mask, n_pixels).unwrap();
            let label = ex.targets[ex.mask.iter().position(|&b| b).unwrap()] as usize;
            let class_loss = match &mut self.fusion {
                Some(head) => {
                    let aux = ex.aux.as_ref().expect("fusion requires aux");
                    let mut input = Vec::with_capacity(N_CLASSES + aux.len());
                    input.extend_from_slice(&mean_logits);
                    input.extend_from_slice(aux);
                    let scores = head.forward(&input, true, rng);
                    classification_ce(&scores, label).0
                }
                None => classification_ce(&mean_logits, label).0,
            };
            total += (seg_loss + loss_cfg.beta * class_loss) * inv_n;
        }
        Ok(Some(total))
    }

    /// Inference on one standardized band stack: per-pixel class
    /// probabilities and logits at input resolution.
    pub fn infer(&mut self, image: &Tensor) -> Result<PixelPrediction> {
        let (bands, h, w) = (image.shape[0], image.shape[1], image.shape[2]);
        let x = Tensor::from_vec(&[1, bands, h, w], image.data.clone());
        let logits = self.net.forward(&x, false)?;
        let n_pixels = h * w;
        let probs = softmax_probs(&logits.data, n_pixels);
        Ok(PixelPrediction {
            logits: Tensor::from_vec(&[N_CLASSES, h, w], logits.data),
            probs: Tensor::from_vec(&[N_CLASSES, h, w], probs),
        })
    }

    /// Region scores from a pixel prediction: masked mean of logits (or
    /// probabilities), optionally refined by the fusion head.
    pub fn region_scores(
        &mut self,
        pred: &PixelPrediction,
        mask: &[bool],
        aux: Option<&[f64]>,
        aggregate: Aggregate,
    ) -> Result<[f64; N_CLASSES]> {
        let n_pixels = pred.logits.shape[1] * pred.logits.shape[2];
        let source = match aggregate {
            Aggregate::Logits => &pred.logits.data,
            Aggregate::Probs => &pred.probs.data,
        };
        let mean = masked_mean_logits(source, mask, n_pixels)
            .ok_or_else(|| ModelError::TruncatedRegion("<unknown>".into()))?;
        match &mut self.fusion {
            Some(head) => {
                let aux = aux.ok_or_else(|| {
                    ModelError::TrainingError("fusion enabled but no aux provided".into())
                })?;
                if aux.len() != head.aux_dim {
                    return Err(ModelError::ShapeError(format!(
                        "aux length {} does not match fusion head input {}",
                        aux.len(),
                        head.aux_dim
                    )));
                }
                let mut input = Vec::with_capacity(N_CLASSES + aux.len());
                input.extend_from_slice(&mean);
                input.extend_from_slice(aux);
                let mut throwaway = ChaCha8Rng::seed_from_u64(0);
                Ok(head.forward(&input, false, &mut throwaway))
            }
            None => Ok(mean),
        }
    }
}

/// Per-pixel network output over one crop.
#[derive(Debug, Clone)]
pub struct PixelPrediction {
    pub logits: Tensor,
    pub probs: Tensor,
}

/// Region-level output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPrediction {
    pub event_id: String,
    pub class: DriverClass,
    pub class_scores: [f64; N_CLASSES],
}

/// Argmax with canonical-order tie-breaking.
pub fn argmax_scores(scores: &[f64; N_CLASSES]) -> DriverClass {
    let mut best = 0usize;
    for c in 1..N_CLASSES {
        if scores[c] > scores[best] {
            best = c;
        }
    }
    DriverClass::from_index(best).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(class: u8, size: usize, usable: bool) -> BatchExample {
        let n = size * size;
        BatchExample {
            image: Tensor::from_vec(
                &[2, size, size],
                (0..2 * n).map(|i| ((i as f64) * 0.37).sin()).collect(),
            ),
            targets: vec![class; n],
            mask: if usable {
                (0..n).map(|i| i % 2 == 0).collect()
            } else {
                vec![false; n]
            },
            aux: Some(vec![0.1, -0.4, 0.9]),
            usable,
        }
    }

    fn model(fusion: bool) -> SegModel {
        SegModel::new(
            SegNetConfig {
                input_bands: 2,
                encoder_widths: vec![4, 6],
                decoder_width: 6,
            },
            fusion.then_some((3, vec![8, 8], 0.0)),
            9,
        )
    }

    #[test]
    fn unusable_examples_contribute_zero_gradient() {
        let cfg = LossConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);

        let mut m1 = model(false);
        m1.zero_grads();
        let batch = vec![example(1, 8, true)];
        m1.train_step(&batch, &cfg, &mut rng).unwrap().unwrap();
        let g1: Vec<(String, Tensor)> = {
            let mut out = Vec::new();
            m1.visit_params(&mut |n: &str, _: &mut Tensor, g: &mut Tensor| {
                out.push((n.to_string(), g.clone()));
            });
            out
        };

        let mut m2 = model(false);
        m2.zero_grads();
        let batch2 = vec![example(1, 8, true), example(2, 8, false)];
        let mut rng2 = ChaCha8Rng::seed_from_u64(0);
        m2.train_step(&batch2, &cfg, &mut rng2).unwrap().unwrap();
        let g2: Vec<(String, Tensor)> = {
            let mut out = Vec::new();
            m2.visit_params(&mut |n: &str, _: &mut Tensor, g: &mut Tensor| {
                out.push((n.to_string(), g.clone()));
            });
            out
        };
        assert_eq!(g1, g2);
    }

    #[test]
    fn all_unusable_batch_is_skipped() {
        let cfg = LossConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = model(false);
        let out = m
            .train_step(&[example(0, 8, false)], &cfg, &mut rng)
            .unwrap();
        assert!(out.is_none());
    }

    #[test]
    fn masked_loss_ignores_outside_targets() {
        let cfg = LossConfig::default();
        let mut m = model(true);
        let mut a = example(1, 8, true);
        let mut b = a.clone();
        // rewrite targets outside the mask only
        for i in 0..b.targets.len() {
            if !b.mask[i] {
                b.targets[i] = 3;
            }
        }
        let mut rng_a = ChaCha8Rng::seed_from_u64(4);
        let mut rng_b = ChaCha8Rng::seed_from_u64(4);
        let la = m.loss_only(std::slice::from_ref(&mut a), &cfg, &mut rng_a).unwrap();
        let lb = m.loss_only(std::slice::from_ref(&mut b), &cfg, &mut rng_b).unwrap();
        assert_eq!(la, lb);
    }

    #[test]
    fn lambda_endpoints_match_components() {
        let mut m = model(false);
        let ex = example(2, 8, true);
        let mut rng = ChaCha8Rng::seed_from_u64(1);

        // train-mode forward (batch statistics), matching loss_only
        let x = Tensor::from_vec(
            &[1, 2, 8, 8],
            ex.image.data.clone(),
        );
        let logits = m.net.forward(&x, true).unwrap();
        let n_pixels = 64;
        let focal_cfg = LossConfig {
            lambda: 1.0,
            beta: 0.0,
            ..LossConfig::default()
        };
        let dice_cfg = LossConfig {
            lambda: 0.0,
            beta: 0.0,
            ..LossConfig::default()
        };
        let (seg_f, _) =
            segmentation_loss(&logits.data, &ex.targets, &ex.mask, &focal_cfg).unwrap();
        let (focal_direct, _) =
            crate::loss::focal_loss(&logits.data, &ex.targets, &ex.mask, focal_cfg.gamma).unwrap();
        assert!((seg_f - focal_direct).abs() < 1e-9);
        let (seg_d, _) =
            segmentation_loss(&logits.data, &ex.targets, &ex.mask, &dice_cfg).unwrap();
        let (dice_direct, _) =
            crate::loss::gdice_loss(&logits.data, &ex.targets, &ex.mask, dice_cfg.dice_eps)
                .unwrap();
        assert!((seg_d - dice_direct).abs() < 1e-9);

        // and the half-half case equals the hand-built sum including the
        // classification term
        let cfg = LossConfig {
            lambda: 0.5,
            beta: 1.0,
            ..LossConfig::default()
        };
        let total = m
            .loss_only(std::slice::from_ref(&ex), &cfg, &mut rng)
            .unwrap()
            .unwrap();
        let mean = masked_mean_logits(&logits.data, &ex.mask, n_pixels).unwrap();
        let (class_loss, _) = classification_ce(&mean, 2);
        let expected = 0.5 * focal_direct + 0.5 * dice_direct + class_loss;
        assert!(
            (total - expected).abs() < 1e-9,
            "total {total} vs expected {expected}"
        );
    }

    #[test]
    fn region_scores_tie_breaks_canonically() {
        let mut m = model(false);
        let n_pixels = 4;
        let mut logits = vec![0.0; 4 * n_pixels];
        logits[0] = 2.0; // class 0 at pixel 0
        logits[n_pixels + 1] = 2.0; // class 1 at pixel 1
        let pred = PixelPrediction {
            logits: Tensor::from_vec(&[4, 2, 2], logits.clone()),
            probs: Tensor::from_vec(&[4, 2, 2], softmax_probs(&logits, n_pixels)),
        };
        let scores = m
            .region_scores(&pred, &[true, true, false, false], None, Aggregate::Logits)
            .unwrap();
        assert_eq!(scores[0], scores[1]);
        assert_eq!(argmax_scores(&scores), DriverClass::Plantation);
    }

    #[test]
    fn scaling_loss_scales_gradients() {
        // dL/dparams is linear in dL/dlogits: doubling the loss doubles
        // every parameter gradient.
        let ex = example(1, 8, true);
        let x = Tensor::from_vec(&[1, 2, 8, 8], ex.image.data.clone());
        let grads = |scale: f64| {
            let mut m = model(false);
            m.zero_grads();
            let logits = m.net.forward(&x, true).unwrap();
            let (_, seg_grad) = segmentation_loss(
                &logits.data,
                &ex.targets,
                &ex.mask,
                &LossConfig::default(),
            )
            .unwrap();
            let dlogits = Tensor::from_vec(
                &logits.shape,
                seg_grad.iter().map(|g| g * scale).collect(),
            );
            m.net.backward(&dlogits);
            let mut out = Vec::new();
            m.visit_params(&mut |_: &str, _: &mut Tensor, g: &mut Tensor| {
                out.extend_from_slice(&g.data);
            });
            out
        };
        let g1 = grads(1.0);
        let g2 = grads(2.0);
        for (a, b) in g2.iter().zip(&g1) {
            assert!(
                (a - 2.0 * b).abs() <= 1e-12 * a.abs().max(1.0),
                "{a} vs 2*{b}"
            );
        }
    }
}
