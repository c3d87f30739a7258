//! Random training crops with the truncation rule.

use rand::Rng;

use crate::error::{Error, Result};
use crate::raster::{crop_to_window, CropWindow, RasterImage, RegionMask};

use super::{AugmentConfig, RandomSource};

/// Draws a uniform random crop window, retrying while the cropped region
/// mask comes out empty, up to `max_crop_retries` extra draws. When every
/// draw truncates the region fully, the last crop is returned with
/// `usable = false` and the training loop must skip the example's loss.
pub fn crop_train(
    image: &RasterImage,
    mask: &RegionMask,
    source: &mut RandomSource,
    config: &AugmentConfig,
) -> Result<(RasterImage, RegionMask, bool)> {
    let size = config.crop_size;
    if size > image.width() || size > image.height() {
        return Err(Error::CropTooLarge {
            size,
            width: image.width(),
            height: image.height(),
        });
    }
    if image.width() != mask.width() || image.height() != mask.height() {
        return Err(Error::ShapeMismatch(format!(
            "image {}x{}, mask {}x{}",
            image.width(),
            image.height(),
            mask.width(),
            mask.height()
        )));
    }

    let max_x = image.width() - size;
    let max_y = image.height() - size;
    let mut last: Option<(CropWindow, RegionMask)> = None;
    for _ in 0..=config.max_crop_retries {
        let x0 = if max_x > 0 {
            source.rng().gen_range(0..=max_x)
        } else {
            0
        };
        let y0 = if max_y > 0 {
            source.rng().gen_range(0..=max_y)
        } else {
            0
        };
        let window = CropWindow { x0, y0, size };
        let cropped_mask = mask.crop(x0, y0, size);
        let usable = !cropped_mask.is_empty();
        if usable {
            return Ok((crop_to_window(image, window), cropped_mask, true));
        }
        last = Some((window, cropped_mask));
    }
    let (window, cropped_mask) = last.expect("at least one draw");
    Ok((crop_to_window(image, window), cropped_mask, false))
}
