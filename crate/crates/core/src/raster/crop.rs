//! Square cropping with consistent geo-origin updates.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::raster::{LonLat, RasterImage};

const METERS_PER_DEGREE: f64 = 111_320.0;

/// A square pixel window into a source image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropWindow {
    pub x0: usize,
    pub y0: usize,
    pub size: usize,
}

/// Crops the centered `size`-square window: offsets are
/// `floor((dim - size) / 2)` on each axis.
pub fn center_crop(image: &RasterImage, size: usize) -> Result<(RasterImage, CropWindow)> {
    if size > image.width() || size > image.height() {
        return Err(Error::CropTooLarge {
            size,
            width: image.width(),
            height: image.height(),
        });
    }
    let window = CropWindow {
        x0: (image.width() - size) / 2,
        y0: (image.height() - size) / 2,
        size,
    };
    Ok((crop_to_window(image, window), window))
}

/// Extracts `window` from `image`, shifting the geo-origin by the pixel
/// offset. Rows grow southward, so latitude decreases with `y0`; the
/// longitude shift uses the planar cos(latitude) approximation.
pub fn crop_to_window(image: &RasterImage, window: CropWindow) -> RasterImage {
    let CropWindow { x0, y0, size } = window;
    assert!(x0 + size <= image.width() && y0 + size <= image.height());

    let dx_m = x0 as f64 * image.pixel_size_m;
    let dy_m = y0 as f64 * image.pixel_size_m;
    let origin = LonLat {
        lon: image.origin.lon
            + dx_m / (METERS_PER_DEGREE * image.origin.lat.to_radians().cos()),
        lat: image.origin.lat - dy_m / METERS_PER_DEGREE,
    };

    let bands: BTreeMap<_, _> = image
        .bands()
        .map(|(b, g)| (b, g.crop(x0, y0, size)))
        .collect();
    let nodata = image.nodata().crop(x0, y0, size);

    RasterImage::new(image.pixel_size_m, origin, image.date, bands, nodata)
        .expect("cropping preserves image invariants")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::raster::{Band, DateInfo};
    use chrono::NaiveDate;

    fn image(w: usize, h: usize) -> RasterImage {
        let data: Vec<f32> = (0..w * h).map(|i| i as f32).collect();
        let mut bands = BTreeMap::new();
        bands.insert(Band::Red, Grid::from_vec(w, h, data));
        RasterImage::new(
            15.0,
            LonLat { lon: 110.0, lat: -2.0 },
            DateInfo::Acquired(NaiveDate::from_ymd_opt(2015, 6, 1).unwrap()),
            bands,
            Grid::filled(w, h, false),
        )
        .unwrap()
    }

    #[test]
    fn window_offsets_match_floor_rule() {
        let (_, w) = center_crop(&image(332, 332), 160).unwrap();
        assert_eq!(w, CropWindow { x0: 86, y0: 86, size: 160 });
    }

    #[test]
    fn identity_window() {
        let img = image(160, 160);
        let (cropped, w) = center_crop(&img, 160).unwrap();
        assert_eq!(w, CropWindow { x0: 0, y0: 0, size: 160 });
        assert_eq!(cropped.band(Band::Red).unwrap(), img.band(Band::Red).unwrap());
    }

    #[test]
    fn oversized_crop_rejected() {
        match center_crop(&image(100, 100), 160) {
            Err(Error::CropTooLarge { .. }) => {}
            other => panic!("expected CropTooLarge, got {other:?}"),
        }
    }

    #[test]
    fn crop_then_embed_restores_window() {
        let img = image(8, 8);
        let (cropped, w) = center_crop(&img, 4).unwrap();
        let src = img.band(Band::Red).unwrap();
        let got = cropped.band(Band::Red).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(got.get(x, y), src.get(w.x0 + x, w.y0 + y));
            }
        }
    }
}
