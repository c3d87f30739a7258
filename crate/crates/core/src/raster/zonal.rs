//! Zonal statistics of a band restricted to a region mask.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::raster::RegionMask;

/// Summary statistics over the masked, non-nodata pixels of one band.
/// `std` is the population standard deviation (divisor N), so it is
/// defined down to single-pixel regions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZonalStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

/// Computes mean/std/min/max over pixels that are in the mask and not
/// flagged nodata. Accumulation is in f64; `EmptyRegion` when no pixel
/// survives the nodata exclusion.
pub fn zonal_stats(band: &Grid<f32>, mask: &RegionMask, nodata: &Grid<bool>) -> Result<ZonalStats> {
    if !band.same_shape(mask.grid()) || !band.same_shape(nodata) {
        return Err(Error::ShapeMismatch(format!(
            "band {}x{}, mask {}x{}, nodata {}x{}",
            band.width(),
            band.height(),
            mask.width(),
            mask.height(),
            nodata.width(),
            nodata.height()
        )));
    }

    let mut n = 0usize;
    let mut sum = 0.0f64;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let values = band.as_slice();
    let inside = mask.grid().as_slice();
    let nd = nodata.as_slice();

    for i in 0..values.len() {
        if inside[i] && !nd[i] {
            let v = values[i] as f64;
            n += 1;
            sum += v;
            min = min.min(v);
            max = max.max(v);
        }
    }
    if n == 0 {
        return Err(Error::EmptyRegion);
    }
    let mean = sum / n as f64;

    let mut sq = 0.0f64;
    for i in 0..values.len() {
        if inside[i] && !nd[i] {
            let d = values[i] as f64 - mean;
            sq += d * d;
        }
    }
    let std = (sq / n as f64).sqrt();

    Ok(ZonalStats {
        mean,
        std,
        min,
        max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_all(w: usize, h: usize) -> RegionMask {
        RegionMask::new(Grid::filled(w, h, true)).unwrap()
    }

    #[test]
    fn single_pixel() {
        let band = Grid::from_vec(1, 1, vec![7.0]);
        let s = zonal_stats(&band, &mask_all(1, 1), &Grid::filled(1, 1, false)).unwrap();
        assert_eq!((s.mean, s.std, s.min, s.max), (7.0, 0.0, 7.0, 7.0));
    }

    #[test]
    fn three_values() {
        let band = Grid::from_vec(3, 1, vec![1.0, 2.0, 3.0]);
        let s = zonal_stats(&band, &mask_all(3, 1), &Grid::filled(3, 1, false)).unwrap();
        assert_eq!(s.mean, 2.0);
        assert!((s.std - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!((s.min, s.max), (1.0, 3.0));
    }

    #[test]
    fn nodata_pixels_excluded() {
        let band = Grid::from_vec(2, 1, vec![5.0, 123.0]);
        let mut nd = Grid::filled(2, 1, false);
        nd.set(1, 0, true);
        let s = zonal_stats(&band, &mask_all(2, 1), &nd).unwrap();
        assert_eq!((s.mean, s.std, s.min, s.max), (5.0, 0.0, 5.0, 5.0));
    }

    #[test]
    fn all_nodata_is_empty_region() {
        let band = Grid::from_vec(2, 1, vec![5.0, 5.0]);
        let nd = Grid::filled(2, 1, true);
        match zonal_stats(&band, &mask_all(2, 1), &nd) {
            Err(Error::EmptyRegion) => {}
            other => panic!("expected EmptyRegion, got {other:?}"),
        }
    }
}
