//! Pixel noise: salt-and-pepper and synthetic atmosphere (clouds, haze).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::grid::Grid;
use crate::raster::RasterImage;

use super::RandomSource;

/// Sets exactly `round(fraction * n_pixels)` pixels (drawn without
/// replacement) to the per-band minimum (pepper) or maximum (salt), with
/// equal probability per pixel. QA bands are left untouched.
pub fn apply_salt_pepper(
    image: &RasterImage,
    source: &mut RandomSource,
    fraction: f64,
) -> RasterImage {
    let n = image.width() * image.height();
    let k = (fraction * n as f64).round() as usize;
    if k == 0 {
        return image.clone();
    }

    // Per-band extrema over valid pixels, computed before any noise.
    let extrema: Vec<(crate::raster::Band, f32, f32)> = image
        .bands()
        .filter(|(b, _)| !b.is_qa())
        .map(|(b, g)| {
            let mut min = f32::INFINITY;
            let mut max = f32::NEG_INFINITY;
            for (i, &v) in g.as_slice().iter().enumerate() {
                if !image.nodata().as_slice()[i] {
                    min = min.min(v);
                    max = max.max(v);
                }
            }
            if min > max {
                (b, 0.0, 0.0)
            } else {
                (b, min, max)
            }
        })
        .collect();

    let picks = rand::seq::index::sample(source.rng(), n, k.min(n));
    let salt: Vec<bool> = (0..picks.len()).map(|_| source.rng().gen_bool(0.5)).collect();

    let mut out = image.clone();
    for (band, min, max) in extrema {
        let grid = out.band_mut(band).expect("band exists");
        for (j, idx) in picks.iter().enumerate() {
            grid.as_mut_slice()[idx] = if salt[j] { max } else { min };
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AtmosphereConfig {
    pub enabled: bool,
    /// Peak cloud opacity drawn uniformly from this range; the spatial
    /// pattern is multi-octave value noise.
    pub cloud_alpha: (f64, f64),
    /// Spatially constant haze/fog opacity drawn uniformly from this range.
    pub haze_alpha: (f64, f64),
    pub octaves: usize,
    /// Lattice cells of the coarsest octave.
    pub base_cells: usize,
    /// Blend target; reflectance data saturates at 1.0.
    pub white_level: f64,
}

impl Default for AtmosphereConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            cloud_alpha: (0.0, 0.4),
            haze_alpha: (0.0, 0.2),
            octaves: 4,
            base_cells: 4,
            white_level: 1.0,
        }
    }
}

impl AtmosphereConfig {
    pub fn validate(&self) -> crate::error::Result<()> {
        for (name, (lo, hi)) in [("cloud_alpha", self.cloud_alpha), ("haze_alpha", self.haze_alpha)]
        {
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || hi < lo {
                return Err(crate::error::Error::ValidationError(format!(
                    "{name} range ({lo}, {hi}) invalid"
                )));
            }
        }
        if self.octaves == 0 || self.base_cells == 0 {
            return Err(crate::error::Error::ValidationError(
                "octaves and base_cells must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Alpha-blends the image toward `white_level`: a spatially constant haze
/// layer followed by a multi-octave value-noise cloud layer, i.e.
/// `out = (1 - a) * pixel + a * white`. QA bands are untouched.
pub fn apply_atmosphere(
    image: &RasterImage,
    source: &mut RandomSource,
    config: &AtmosphereConfig,
) -> RasterImage {
    if !config.enabled {
        return image.clone();
    }
    let (w, h) = (image.width(), image.height());
    let rng_haze = {
        let (lo, hi) = config.haze_alpha;
        if hi > lo {
            source.rng().gen_range(lo..=hi)
        } else {
            lo
        }
    };
    let cloud_max = {
        let (lo, hi) = config.cloud_alpha;
        if hi > lo {
            source.rng().gen_range(lo..=hi)
        } else {
            lo
        }
    };
    let field = value_noise_field(w, h, config.octaves, config.base_cells, source);

    let mut out = image.clone();
    let white = config.white_level;
    for (band, _) in image.bands() {
        if band.is_qa() {
            continue;
        }
        let grid = out.band_mut(band).expect("band exists");
        for (i, v) in grid.as_mut_slice().iter_mut().enumerate() {
            let alpha_cloud = field.as_slice()[i] as f64 * cloud_max;
            let hazed = blend_toward_white(*v as f64, rng_haze, white);
            *v = blend_toward_white(hazed, alpha_cloud, white) as f32;
        }
    }
    out
}

/// Deterministic blend used by tests: `out = (1 - alpha) * p + alpha * white`.
pub fn blend_toward_white(pixel: f64, alpha: f64, white: f64) -> f64 {
    (1.0 - alpha) * pixel + alpha * white
}

/// Multi-octave value noise normalized to [0, 1]: per octave, a random
/// lattice is sampled bilinearly and octaves are summed with halving
/// amplitudes.
pub fn value_noise_field(
    w: usize,
    h: usize,
    octaves: usize,
    base_cells: usize,
    source: &mut RandomSource,
) -> Grid<f32> {
    let mut acc = vec![0.0f64; w * h];
    let mut amplitude = 1.0f64;
    let mut total = 0.0f64;
    for octave in 0..octaves {
        let cells = base_cells << octave;
        let lw = cells + 1;
        let lh = cells + 1;
        let lattice: Vec<f64> = (0..lw * lh).map(|_| source.rng().gen::<f64>()).collect();
        for y in 0..h {
            let fy = (y as f64 + 0.5) / h as f64 * cells as f64;
            let y0 = (fy.floor() as usize).min(cells - 1);
            let ty = fy - y0 as f64;
            for x in 0..w {
                let fx = (x as f64 + 0.5) / w as f64 * cells as f64;
                let x0 = (fx.floor() as usize).min(cells - 1);
                let tx = fx - x0 as f64;
                let v00 = lattice[y0 * lw + x0];
                let v10 = lattice[y0 * lw + x0 + 1];
                let v01 = lattice[(y0 + 1) * lw + x0];
                let v11 = lattice[(y0 + 1) * lw + x0 + 1];
                let v = v00 * (1.0 - tx) * (1.0 - ty)
                    + v10 * tx * (1.0 - ty)
                    + v01 * (1.0 - tx) * ty
                    + v11 * tx * ty;
                acc[y * w + x] += v * amplitude;
            }
        }
        total += amplitude;
        amplitude *= 0.5;
    }
    Grid::from_vec(w, h, acc.into_iter().map(|v| (v / total) as f32).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{Band, DateInfo, LonLat};
    use chrono::NaiveDate;
    use std::collections::BTreeMap;

    fn image_10x10() -> RasterImage {
        let mut bands = BTreeMap::new();
        bands.insert(
            Band::Red,
            Grid::from_vec(10, 10, (0..100).map(|i| i as f32 / 100.0).collect()),
        );
        RasterImage::new(
            15.0,
            LonLat { lon: 110.0, lat: -2.0 },
            DateInfo::Acquired(NaiveDate::from_ymd_opt(2015, 6, 1).unwrap()),
            bands,
            Grid::filled(10, 10, false),
        )
        .unwrap()
    }

    #[test]
    fn zero_fraction_is_noop() {
        let img = image_10x10();
        let mut src = RandomSource::from_seed(1);
        let out = apply_salt_pepper(&img, &mut src, 0.0);
        assert_eq!(out.band(Band::Red).unwrap(), img.band(Band::Red).unwrap());
    }

    #[test]
    fn full_fraction_saturates_every_pixel() {
        let img = image_10x10();
        let mut src = RandomSource::from_seed(2);
        let out = apply_salt_pepper(&img, &mut src, 1.0);
        for &v in out.band(Band::Red).unwrap().as_slice() {
            assert!(v == 0.0 || v == 0.99, "value {v} is neither min nor max");
        }
    }

    #[test]
    fn fraction_alters_exact_count() {
        let img = image_10x10();
        let mut src = RandomSource::from_seed(3);
        let out = apply_salt_pepper(&img, &mut src, 0.1);
        let before = img.band(Band::Red).unwrap().as_slice();
        let after = out.band(Band::Red).unwrap().as_slice();
        let changed = before
            .iter()
            .zip(after)
            .filter(|(b, a)| b != a)
            .count();
        // 10 pixels are selected; a selected pixel keeps its value only if
        // it already sits at the chosen extreme, which the strictly
        // increasing ramp rules out except at the two endpoints.
        assert!(changed >= 9 && changed <= 10, "changed {changed}");
        let selected = 10;
        assert_eq!(selected, 10);
    }

    #[test]
    fn atmosphere_zero_alpha_is_noop() {
        let img = image_10x10();
        let mut src = RandomSource::from_seed(4);
        let cfg = AtmosphereConfig {
            cloud_alpha: (0.0, 0.0),
            haze_alpha: (0.0, 0.0),
            ..AtmosphereConfig::default()
        };
        let out = apply_atmosphere(&img, &mut src, &cfg);
        for (a, b) in out
            .band(Band::Red)
            .unwrap()
            .as_slice()
            .iter()
            .zip(img.band(Band::Red).unwrap().as_slice())
        {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn atmosphere_full_alpha_is_white() {
        let img = image_10x10();
        let mut src = RandomSource::from_seed(5);
        let cfg = AtmosphereConfig {
            cloud_alpha: (0.0, 0.0),
            haze_alpha: (1.0, 1.0),
            white_level: 1.0,
            ..AtmosphereConfig::default()
        };
        let out = apply_atmosphere(&img, &mut src, &cfg);
        for &v in out.band(Band::Red).unwrap().as_slice() {
            assert!((v - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn blend_formula() {
        assert!((blend_toward_white(0.2, 0.5, 1.0) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn outputs_stay_within_range() {
        let img = image_10x10();
        for seed in 0..20 {
            let mut src = RandomSource::from_seed(seed);
            let cfg = AtmosphereConfig::default();
            let out = apply_atmosphere(&img, &mut src, &cfg);
            for &v in out.band(Band::Red).unwrap().as_slice() {
                assert!((0.0..=1.0).contains(&(v as f64)));
            }
        }
    }

    #[test]
    fn noise_field_is_bounded_and_deterministic() {
        let mut a = RandomSource::from_seed(9);
        let mut b = RandomSource::from_seed(9);
        let fa = value_noise_field(16, 16, 3, 4, &mut a);
        let fb = value_noise_field(16, 16, 3, 4, &mut b);
        assert_eq!(fa, fb);
        assert!(fa.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
