//! The training loop: scene data augmentation, stochastic transforms,
//! random crops with skip semantics, gradient steps, per-epoch
//! validation, and best-macro-F1 checkpointing.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use forest_core::augment::{
    apply_affine, apply_atmosphere, apply_salt_pepper, crop_train, sda_sample, AugmentConfig,
    RandomSource,
};
use forest_core::composite::SceneSet;
use forest_core::features::Standardizer;
use forest_core::hash::{fnv1a64, fnv1a64_extend};
use forest_core::ingest::{ForestLossEvent, Split};
use forest_core::raster::{rasterize_polygon, Band, RasterImage};

use crate::checkpoint::{Checkpoint, CheckpointMeta};
use crate::error::{ModelError, Result};
use crate::loss::LossConfig;
use crate::model::{Aggregate, BatchExample, SegModel};
use crate::optim::Adam;
use crate::predict::{predict_event_with, InferenceSettings};
use crate::segnet::SegNetConfig;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub loss: LossConfig,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub fusion_enabled: bool,
    pub fusion_hidden: Vec<usize>,
    pub pretrained_weights_path: Option<PathBuf>,
    pub aggregate: Aggregate,
    pub input_bands: Vec<Band>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossConfig::default(),
            learning_rate: 1e-3,
            batch_size: 8,
            epochs: 30,
            dropout: 0.5,
            weight_decay: 1e-4,
            seed: 0,
            fusion_enabled: false,
            fusion_hidden: vec![128, 128],
            pretrained_weights_path: None,
            aggregate: Aggregate::Logits,
            input_bands: vec![Band::Red, Band::Green, Band::Blue],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.loss.lambda) {
            return Err(ModelError::TrainingError(format!(
                "lambda {} outside [0,1]",
                self.loss.lambda
            )));
        }
        if self.loss.gamma < 0.0 || self.loss.beta < 0.0 || self.loss.dice_eps <= 0.0 {
            return Err(ModelError::TrainingError(
                "gamma and beta must be nonnegative, dice_eps positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::TrainingError(format!(
                "dropout {} outside [0,1)",
                self.dropout
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.input_bands.is_empty() {
            return Err(ModelError::TrainingError(
                "batch_size, epochs, and input_bands must be nonempty".into(),
            ));
        }
        Ok(())
    }
}

/// Per-band standardization statistics computed over the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandStats {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

/// One event with everything training needs.
#[derive(Debug, Clone)]
pub struct TrainEvent {
    pub event: ForestLossEvent,
    pub scene_set: SceneSet,
    /// Raw (unstandardized) auxiliary features; required when fusion is
    /// enabled.
    pub aux: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_macro_f1: f64,
    pub val_excluded: usize,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
}

/// Stacks the configured bands of an image into a `[bands, h, w]` tensor,
/// standardizing with `stats` when given. Nodata pixels map to 0 (the
/// standardized mean).
pub fn stack_bands(
    image: &RasterImage,
    bands: &[Band],
    stats: Option<&BandStats>,
) -> Result<Tensor> {
    let (w, h) = (image.width(), image.height());
    let mut data = Vec::with_capacity(bands.len() * w * h);
    for (bi, &band) in bands.iter().enumerate() {
        let grid = image.band(band).map_err(ModelError::Core)?;
        let nd = image.nodata().as_slice();
        let (mean, std) = match stats {
            Some(s) => (s.means[bi], s.stds[bi].max(1e-12)),
            None => (0.0, 1.0),
        };
        for (i, &v) in grid.as_slice().iter().enumerate() {
            if nd[i] {
                data.push(0.0);
            } else {
                data.push((v as f64 - mean) / std);
            }
        }
    }
    Ok(Tensor::from_vec(&[bands.len(), h, w], data))
}

/// Per-band mean/std over the valid pixels of the training events'
/// inference images.
pub fn compute_band_stats(events: &[&TrainEvent], bands: &[Band]) -> Result<BandStats> {
    let mut sums = vec![0.0f64; bands.len()];
    let mut sq = vec![0.0f64; bands.len()];
    let mut counts = vec![0u64; bands.len()];
    for te in events {
        let image =
            forest_core::composite::select_inference_image(&te.scene_set, te.event.loss_year);
        for (bi, &band) in bands.iter().enumerate() {
            let grid = image.band(band).map_err(ModelError::Core)?;
            let nd = image.nodata().as_slice();
            for (i, &v) in grid.as_slice().iter().enumerate() {
                if !nd[i] {
                    sums[bi] += v as f64;
                    sq[bi] += (v as f64) * (v as f64);
                    counts[bi] += 1;
                }
            }
        }
    }
    let mut means = Vec::with_capacity(bands.len());
    let mut stds = Vec::with_capacity(bands.len());
    for bi in 0..bands.len() {
        if counts[bi] == 0 {
            return Err(ModelError::TrainingError(format!(
                "band {} has no valid pixels in the training split",
                bands[bi]
            )));
        }
        let mean = sums[bi] / counts[bi] as f64;
        let var = (sq[bi] / counts[bi] as f64 - mean * mean).max(0.0);
        means.push(mean);
        stds.push(var.sqrt());
    }
    Ok(BandStats { means, stds })
}

fn derive_rng(seed: u64, label: &str, a: u64, b: u64) -> ChaCha8Rng {
    let mut h = fnv1a64(&seed.to_le_bytes());
    h = fnv1a64_extend(h, label.as_bytes());
    h = fnv1a64_extend(h, &a.to_le_bytes());
    h = fnv1a64_extend(h, &b.to_le_bytes());
    ChaCha8Rng::seed_from_u64(h)
}

/// Builds the augmented training example for `(event, epoch)`.
#[allow(clippy::too_many_arguments)]
fn build_train_example(
    te: &TrainEvent,
    epoch: u64,
    config: &TrainConfig,
    augment: &AugmentConfig,
    band_stats: &BandStats,
    aux_std: Option<&Standardizer>,
) -> Result<BatchExample> {
    let mut source = RandomSource::for_example(config.seed, &te.event.event_id, epoch);
    let image = sda_sample(
        &te.scene_set,
        te.event.loss_year,
        augment.sda_enabled,
        &mut source,
    );
    let full_mask = rasterize_polygon(&te.event.polygon, image.width(), image.height())
        .map_err(ModelError::Core)?;
    let (image, mask) = apply_affine(image, &full_mask, &mut source, &augment.affine)
        .map_err(ModelError::Core)?;
    let image = apply_salt_pepper(&image, &mut source, augment.salt_pepper_fraction);
    let image = apply_atmosphere(&image, &mut source, &augment.atmosphere);
    let (image, mask, usable) =
        crop_train(&image, &mask, &mut source, augment).map_err(ModelError::Core)?;

    let tensor = stack_bands(&image, &config.input_bands, Some(band_stats))?;
    let n = augment.crop_size * augment.crop_size;
    let aux = match (&te.aux, aux_std) {
        (Some(raw), Some(std)) => Some(std.transform_row(raw)),
        (Some(raw), None) => Some(raw.clone()),
        (None, _) => None,
    };
    Ok(BatchExample {
        image: tensor,
        targets: vec![te.event.driver.index() as u8; n],
        mask: mask.grid().as_slice().to_vec(),
        aux,
        usable,
    })
}

/// Trains the model, validating after every epoch and retaining the
/// parameters of the epoch with the highest validation macro-F1.
/// Deterministic under a fixed seed.
pub fn train(
    events: &[TrainEvent],
    config: &TrainConfig,
    segnet: &SegNetConfig,
    augment: &AugmentConfig,
    feature_ordering_hash: &str,
) -> Result<TrainOutcome> {
    config.validate()?;
    augment.validate().map_err(ModelError::Core)?;
    let train_events: Vec<&TrainEvent> =
        events.iter().filter(|e| e.event.split == Split::Train).collect();
    let val_events: Vec<&TrainEvent> =
        events.iter().filter(|e| e.event.split == Split::Val).collect();
    if train_events.is_empty() || val_events.is_empty() {
        return Err(ModelError::TrainingError(
            "train and val splits must both be nonempty".into(),
        ));
    }

    let band_stats = compute_band_stats(&train_events, &config.input_bands)?;
    let (aux_std, aux_dim) = if config.fusion_enabled {
        let rows: Vec<Vec<f64>> = train_events
            .iter()
            .map(|te| {
                te.aux.clone().ok_or_else(|| {
                    ModelError::TrainingError(format!(
                        "fusion enabled but event {} has no aux features",
                        te.event.event_id
                    ))
                })
            })
            .collect::<Result<_>>()?;
        let dim = rows[0].len();
        let std = Standardizer::fit(&rows).map_err(ModelError::Core)?;
        (Some(std), Some(dim))
    } else {
        (None, None)
    };

    let mut segnet_cfg = segnet.clone();
    segnet_cfg.input_bands = config.input_bands.len();
    let mut model = SegModel::new(
        segnet_cfg.clone(),
        aux_dim.map(|d| (d, config.fusion_hidden.clone(), config.dropout)),
        config.seed,
    );
    if let Some(path) = &config.pretrained_weights_path {
        let pre = Checkpoint::load(path)?;
        let applied = model.import_tensors(&pre.tensors);
        if applied == 0 {
            return Err(ModelError::TrainingError(format!(
                "no tensor in {} matched the model",
                path.display()
            )));
        }
    }

    let mut adam = Adam::new(config.learning_rate, config.weight_decay);
    let settings = InferenceSettings {
        bands: config.input_bands.clone(),
        band_stats: band_stats.clone(),
        aux_standardizer: aux_std.clone(),
        crop_size: augment.crop_size,
        aggregate: config.aggregate,
    };

    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, Vec<(String, Tensor)>, usize)> = None;

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..train_events.len()).collect();
        order.shuffle(&mut derive_rng(config.seed, "epoch-order", epoch as u64, 0));

        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        let mut any_usable = false;
        for (batch_idx, chunk) in order.chunks(config.batch_size.max(1)).enumerate() {
            let batch: Vec<BatchExample> = chunk
                .iter()
                .map(|&i| {
                    build_train_example(
                        train_events[i],
                        epoch as u64,
                        config,
                        augment,
                        &band_stats,
                        aux_std.as_ref(),
                    )
                })
                .collect::<Result<_>>()?;
            let mut dropout_rng =
                derive_rng(config.seed, "dropout", epoch as u64, batch_idx as u64);
            model.zero_grads();
            if let Some(loss) = model.train_step(&batch, &config.loss, &mut dropout_rng)? {
                adam.step(|v| model.visit_params(v));
                loss_sum += loss;
                batches += 1;
                any_usable = true;
            }
        }
        if !any_usable {
            return Err(ModelError::TrainingError(format!(
                "epoch {epoch}: no usable training example (all crops truncated)"
            )));
        }
        let train_loss = loss_sum / batches as f64;

        let mut pairs = Vec::with_capacity(val_events.len());
        let mut excluded = 0usize;
        for te in &val_events {
            match predict_event_with(&mut model, &settings, &te.event, &te.scene_set, te.aux.as_deref()) {
                Ok(pred) => pairs.push((te.event.driver, pred.class)),
                Err(ModelError::TruncatedRegion(_)) => excluded += 1,
                Err(e) => return Err(e),
            }
        }
        if pairs.is_empty() {
            return Err(ModelError::TrainingError(format!(
                "epoch {epoch}: every validation region was truncated"
            )));
        }
        let val_f1 = forest_eval::macro_f1(&pairs)?;
        log.push(EpochLog {
            epoch,
            train_loss,
            val_macro_f1: val_f1,
            val_excluded: excluded,
        });
        if best.as_ref().map_or(true, |(b, _, _)| val_f1 > *b) {
            best = Some((val_f1, model.export_tensors(), epoch));
        }
    }

    let (best_f1, tensors, best_epoch) = best.expect("epochs >= 1");
    let meta = CheckpointMeta {
        version: 1,
        segnet: segnet_cfg,
        train: config.clone(),
        augment: augment.clone(),
        bands: config.input_bands.clone(),
        band_stats,
        aux_standardizer: aux_std,
        aux_dim,
        aggregate: config.aggregate,
        feature_ordering_hash: feature_ordering_hash.to_string(),
        best_epoch,
        best_val_macro_f1: best_f1,
    };
    Ok(TrainOutcome {
        checkpoint: Checkpoint { tensors, meta },
        log,
    })
}
