//! Spectral indices.

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Normalized difference vegetation index, `(NIR - Red) / (NIR + Red)`,
/// computed per pixel. Returns the value grid and a nodata mask that is
/// set where `NIR + Red == 0` (the ratio is undefined there; emitting 0
/// would fake a vegetation signal).
pub fn ndvi(nir: &Grid<f32>, red: &Grid<f32>) -> Result<(Grid<f32>, Grid<bool>)> {
    if !nir.same_shape(red) {
        return Err(Error::ShapeMismatch(format!(
            "nir {}x{}, red {}x{}",
            nir.width(),
            nir.height(),
            red.width(),
            red.height()
        )));
    }
    let mut values = Vec::with_capacity(nir.len());
    let mut nodata = Vec::with_capacity(nir.len());
    for (&n, &r) in nir.as_slice().iter().zip(red.as_slice()) {
        let denom = n as f64 + r as f64;
        if denom == 0.0 {
            values.push(0.0);
            nodata.push(true);
        } else {
            values.push(((n as f64 - r as f64) / denom) as f32);
            nodata.push(false);
        }
    }
    Ok((
        Grid::from_vec(nir.width(), nir.height(), values),
        Grid::from_vec(nir.width(), nir.height(), nodata),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_bands_give_zero() {
        let nir = Grid::filled(2, 2, 0.4f32);
        let red = Grid::filled(2, 2, 0.4f32);
        let (v, nd) = ndvi(&nir, &red).unwrap();
        assert!(v.as_slice().iter().all(|&x| x == 0.0));
        assert!(nd.as_slice().iter().all(|&m| !m));
    }

    #[test]
    fn direct_formula() {
        let nir = Grid::filled(1, 1, 0.6f32);
        let red = Grid::filled(1, 1, 0.2f32);
        let (v, _) = ndvi(&nir, &red).unwrap();
        assert!((v.get(0, 0) - 0.5).abs() < 1e-7);
    }

    #[test]
    fn zero_sum_is_nodata() {
        let nir = Grid::filled(1, 1, 0.0f32);
        let red = Grid::filled(1, 1, 0.0f32);
        let (_, nd) = ndvi(&nir, &red).unwrap();
        assert!(nd.get(0, 0));
    }

    #[test]
    fn output_bounded_where_defined() {
        let nir = Grid::from_vec(3, 1, vec![0.9, 0.0, 0.1]);
        let red = Grid::from_vec(3, 1, vec![0.1, 0.5, 0.9]);
        let (v, nd) = ndvi(&nir, &red).unwrap();
        for (i, &val) in v.as_slice().iter().enumerate() {
            if !nd.as_slice()[i] {
                assert!((-1.0..=1.0).contains(&val));
            }
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let nir = Grid::filled(2, 2, 0.5f32);
        let red = Grid::filled(3, 2, 0.5f32);
        assert!(matches!(ndvi(&nir, &red), Err(Error::ShapeMismatch(_))));
    }
}
