//! Region-level inference: select the image, center crop, run the
//! network, aggregate the masked per-pixel scores (or the fusion head),
//! and argmax with canonical tie-breaking.

use forest_core::composite::{select_inference_image, SceneSet};
use forest_core::features::Standardizer;
use forest_core::ingest::ForestLossEvent;
use forest_core::raster::{center_crop, rasterize_polygon, Band};

use crate::checkpoint::Checkpoint;
use crate::error::{ModelError, Result};
use crate::model::{argmax_scores, Aggregate, PixelPrediction, RegionPrediction, SegModel};
use crate::train::{stack_bands, BandStats};

/// Everything inference needs besides the network weights.
#[derive(Debug, Clone)]
pub struct InferenceSettings {
    pub bands: Vec<Band>,
    pub band_stats: BandStats,
    pub aux_standardizer: Option<Standardizer>,
    pub crop_size: usize,
    pub aggregate: Aggregate,
}

/// Predicts one event with an existing model (used during training for
/// per-epoch validation and by `Predictor` for standalone inference).
pub fn predict_event_with(
    model: &mut SegModel,
    settings: &InferenceSettings,
    event: &ForestLossEvent,
    scene_set: &SceneSet,
    aux_raw: Option<&[f64]>,
) -> Result<RegionPrediction> {
    Ok(predict_event_detailed(model, settings, event, scene_set, aux_raw)?.0)
}

/// Full inference output: the region prediction plus the per-pixel
/// prediction and its crop mask (for class-map rendering).
pub fn predict_event_detailed(
    model: &mut SegModel,
    settings: &InferenceSettings,
    event: &ForestLossEvent,
    scene_set: &SceneSet,
    aux_raw: Option<&[f64]>,
) -> Result<(RegionPrediction, PixelPrediction, Vec<bool>)> {
    let image = select_inference_image(scene_set, event.loss_year);
    let full_mask = rasterize_polygon(&event.polygon, image.width(), image.height())
        .map_err(ModelError::Core)?;
    let (cropped, window) =
        center_crop(image, settings.crop_size).map_err(ModelError::Core)?;
    let mask = full_mask.crop(window.x0, window.y0, window.size);
    if mask.is_empty() {
        return Err(ModelError::TruncatedRegion(event.event_id.clone()));
    }

    let tensor = stack_bands(&cropped, &settings.bands, Some(&settings.band_stats))?;
    let pred = model.infer(&tensor)?;
    let mask_vec: Vec<bool> = mask.grid().as_slice().to_vec();
    let aux_std = match (aux_raw, &settings.aux_standardizer) {
        (Some(raw), Some(std)) => Some(std.transform_row(raw)),
        (Some(raw), None) => Some(raw.to_vec()),
        (None, _) => None,
    };
    let scores = model.region_scores(&pred, &mask_vec, aux_std.as_deref(), settings.aggregate)?;
    let region = RegionPrediction {
        event_id: event.event_id.clone(),
        class: argmax_scores(&scores),
        class_scores: scores,
    };
    Ok((region, pred, mask_vec))
}

/// Standalone predictor reconstructed from a checkpoint.
pub struct Predictor {
    pub model: SegModel,
    pub settings: InferenceSettings,
}

impl Predictor {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let meta = &ckpt.meta;
        let mut model = SegModel::new(
            meta.segnet.clone(),
            meta.aux_dim
                .map(|d| (d, meta.train.fusion_hidden.clone(), meta.train.dropout)),
            meta.train.seed,
        );
        let applied = model.import_tensors(&ckpt.tensors);
        if applied == 0 {
            return Err(ModelError::CorruptCheckpoint(
                "no tensor matched the reconstructed model".into(),
            ));
        }
        Ok(Self {
            model,
            settings: InferenceSettings {
                bands: meta.bands.clone(),
                band_stats: meta.band_stats.clone(),
                aux_standardizer: meta.aux_standardizer.clone(),
                crop_size: meta.augment.crop_size,
                aggregate: meta.aggregate,
            },
        })
    }

    pub fn predict(
        &mut self,
        event: &ForestLossEvent,
        scene_set: &SceneSet,
        aux_raw: Option<&[f64]>,
    ) -> Result<RegionPrediction> {
        predict_event_with(&mut self.model, &self.settings, event, scene_set, aux_raw)
    }

    pub fn predict_detailed(
        &mut self,
        event: &ForestLossEvent,
        scene_set: &SceneSet,
        aux_raw: Option<&[f64]>,
    ) -> Result<(RegionPrediction, PixelPrediction, Vec<bool>)> {
        predict_event_detailed(&mut self.model, &self.settings, event, scene_set, aux_raw)
    }
}
