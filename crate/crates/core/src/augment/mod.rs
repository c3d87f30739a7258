//! Training-time stochastic transforms: scene data augmentation, affine
//! warps, salt-and-pepper noise, synthetic atmosphere, and random crops
//! with the truncation rule.
//!
//! All randomness flows through ChaCha8 generators derived from
//! `(global_seed, event_id, epoch)`, so parallel data loading is
//! order-independent and bit-exact reproducible.

mod affine;
mod crop;
mod noise;

pub use affine::{apply_affine, AffineConfig};
pub use crop::crop_train;
pub use noise::{apply_atmosphere, apply_salt_pepper, AtmosphereConfig};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::composite::{select_inference_image, SceneSet};
use crate::raster::RasterImage;

/// Deterministic random source. The generator is ChaCha8 (stable stream
/// for a given seed across platforms and releases of this crate).
#[derive(Debug, Clone)]
pub struct RandomSource {
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Derives the per-example source for `(global_seed, event_id, epoch)`
    /// by FNV-1a hashing, so example order never affects draws.
    pub fn for_example(global_seed: u64, event_id: &str, epoch: u64) -> Self {
        let mut h = crate::hash::fnv1a64(&global_seed.to_le_bytes());
        h = crate::hash::fnv1a64_extend(h, event_id.as_bytes());
        h = crate::hash::fnv1a64_extend(h, &epoch.to_le_bytes());
        Self::from_seed(h)
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// All augmentation knobs. Parameter ranges are artifact defaults; none
/// are published values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub affine: AffineConfig,
    /// Fraction of pixels receiving salt-or-pepper noise.
    pub salt_pepper_fraction: f64,
    pub atmosphere: AtmosphereConfig,
    /// Scene data augmentation: sample uniformly from the accepted scenes
    /// and the composite rather than always using the inference image.
    pub sda_enabled: bool,
    pub crop_size: usize,
    pub max_crop_retries: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            affine: AffineConfig::default(),
            salt_pepper_fraction: 0.01,
            atmosphere: AtmosphereConfig::default(),
            sda_enabled: true,
            crop_size: 160,
            max_crop_retries: 10,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> crate::error::Result<()> {
        if !(0.0..=1.0).contains(&self.salt_pepper_fraction) {
            return Err(crate::error::Error::ValidationError(format!(
                "salt_pepper_fraction {} outside [0,1]",
                self.salt_pepper_fraction
            )));
        }
        self.affine.validate()?;
        self.atmosphere.validate()
    }
}

/// Draws the training image for one example: uniform over the composite
/// and the accepted scenes when SDA is on, otherwise the same image
/// inference would use.
pub fn sda_sample<'a>(
    scene_set: &'a SceneSet,
    loss_year: i32,
    sda_enabled: bool,
    source: &mut RandomSource,
) -> &'a RasterImage {
    if !sda_enabled {
        return select_inference_image(scene_set, loss_year);
    }
    let n_options = scene_set.scenes.len() + 1;
    let pick = source.rng().gen_range(0..n_options);
    if pick == 0 {
        &scene_set.composite
    } else {
        &scene_set.scenes[pick - 1].image
    }
}
