//! Multi-band raster images and the geometric primitives that operate on
//! them: polygon rasterization, zonal statistics, cropping, NDVI, and
//! Brovey pan-sharpening.

mod container;
mod crop;
mod indices;
mod polygon;
mod sharpen;
mod zonal;

pub use container::{load_raster_dir, save_raster_dir};
pub use crop::{center_crop, crop_to_window, CropWindow};
pub use indices::ndvi;
pub use polygon::{rasterize_polygon, Ring};
pub use sharpen::pan_sharpen;
pub use zonal::{zonal_stats, ZonalStats};

use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Named spectral or quality band of a Landsat-style image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Red,
    Green,
    Blue,
    Nir,
    Swir1,
    Swir2,
    QaCloud,
    QaCirrus,
}

impl Band {
    pub const ALL: [Band; 8] = [
        Band::Red,
        Band::Green,
        Band::Blue,
        Band::Nir,
        Band::Swir1,
        Band::Swir2,
        Band::QaCloud,
        Band::QaCirrus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Band::Red => "red",
            Band::Green => "green",
            Band::Blue => "blue",
            Band::Nir => "nir",
            Band::Swir1 => "swir1",
            Band::Swir2 => "swir2",
            Band::QaCloud => "qa_cloud",
            Band::QaCirrus => "qa_cirrus",
        }
    }

    pub fn from_name(name: &str) -> Option<Band> {
        Band::ALL.iter().copied().find(|b| b.name() == name)
    }

    pub fn is_qa(self) -> bool {
        matches!(self, Band::QaCloud | Band::QaCirrus)
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Temporal metadata of an image: single scenes carry an acquisition date,
/// composites carry the date range they were built over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DateInfo {
    Acquired(NaiveDate),
    Range { start: NaiveDate, end: NaiveDate },
}

/// Geographic coordinate of the center of pixel (0, 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LonLat {
    pub lon: f64,
    pub lat: f64,
}

/// Multi-band float raster with geo-metadata and a shared per-pixel
/// nodata mask. All bands share the same dimensions; QA bands hold only
/// {0, 1}.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    pub pixel_size_m: f64,
    pub origin: LonLat,
    pub date: DateInfo,
    bands: BTreeMap<Band, Grid<f32>>,
    nodata: Grid<bool>,
}

impl RasterImage {
    pub fn new(
        pixel_size_m: f64,
        origin: LonLat,
        date: DateInfo,
        bands: BTreeMap<Band, Grid<f32>>,
        nodata: Grid<bool>,
    ) -> Result<Self> {
        if pixel_size_m <= 0.0 {
            return Err(Error::ValidationError(format!(
                "pixel_size_m must be positive, got {pixel_size_m}"
            )));
        }
        let mut dims = None;
        for (band, grid) in &bands {
            let d = (grid.width(), grid.height());
            match dims {
                None => dims = Some(d),
                Some(existing) if existing != d => {
                    return Err(Error::ShapeMismatch(format!(
                        "band {band} is {}x{}, expected {}x{}",
                        d.0, d.1, existing.0, existing.1
                    )))
                }
                _ => {}
            }
            if band.is_qa() {
                if let Some((x, y, v)) =
                    grid.iter_xy().find(|&(_, _, v)| v != 0.0 && v != 1.0)
                {
                    return Err(Error::ValidationError(format!(
                        "qa band {band} holds {v} at ({x},{y}); only 0/1 allowed"
                    )));
                }
            }
        }
        let (width, height) =
            dims.ok_or_else(|| Error::ValidationError("image has no bands".into()))?;
        if (nodata.width(), nodata.height()) != (width, height) {
            return Err(Error::ShapeMismatch(format!(
                "nodata mask is {}x{}, bands are {width}x{height}",
                nodata.width(),
                nodata.height()
            )));
        }
        Ok(Self {
            width,
            height,
            pixel_size_m,
            origin,
            date,
            bands,
            nodata,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn band(&self, band: Band) -> Result<&Grid<f32>> {
        self.bands.get(&band).ok_or(Error::MissingBand(band))
    }

    pub fn has_band(&self, band: Band) -> bool {
        self.bands.contains_key(&band)
    }

    /// Bands in canonical order.
    pub fn bands(&self) -> impl Iterator<Item = (Band, &Grid<f32>)> {
        self.bands.iter().map(|(&b, g)| (b, g))
    }

    pub fn band_set(&self) -> Vec<Band> {
        self.bands.keys().copied().collect()
    }

    #[inline]
    pub fn nodata(&self) -> &Grid<bool> {
        &self.nodata
    }

    pub fn nodata_mut(&mut self) -> &mut Grid<bool> {
        &mut self.nodata
    }

    pub fn band_mut(&mut self, band: Band) -> Result<&mut Grid<f32>> {
        self.bands.get_mut(&band).ok_or(Error::MissingBand(band))
    }

    pub fn insert_band(&mut self, band: Band, grid: Grid<f32>) -> Result<()> {
        if (grid.width(), grid.height()) != (self.width, self.height) {
            return Err(Error::ShapeMismatch(format!(
                "band {band} is {}x{}, image is {}x{}",
                grid.width(),
                grid.height(),
                self.width,
                self.height
            )));
        }
        self.bands.insert(band, grid);
        Ok(())
    }

    /// Fraction of non-nodata pixels for which `band` is set to 1.
    /// Used for cloud and cirrus statistics over QA bands.
    pub fn flag_fraction(&self, band: Band) -> Result<f64> {
        let grid = self.band(band)?;
        let mut flagged = 0u64;
        let mut valid = 0u64;
        for (value, &nd) in grid.as_slice().iter().zip(self.nodata.as_slice()) {
            if nd {
                continue;
            }
            valid += 1;
            if *value == 1.0 {
                flagged += 1;
            }
        }
        if valid == 0 {
            return Ok(0.0);
        }
        Ok(flagged as f64 / valid as f64)
    }
}

/// Boolean region mask aligned to a raster grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    inside: Grid<bool>,
    pixel_count: usize,
}

impl RegionMask {
    /// Wraps a boolean grid; fails with `EmptyRegion` when nothing is set.
    pub fn new(inside: Grid<bool>) -> Result<Self> {
        let pixel_count = inside.as_slice().iter().filter(|&&b| b).count();
        if pixel_count == 0 {
            return Err(Error::EmptyRegion);
        }
        Ok(Self {
            inside,
            pixel_count,
        })
    }

    /// A mask that may be empty; used by crop handling where emptiness is
    /// signalled through the `usable` flag rather than an error.
    pub fn new_allow_empty(inside: Grid<bool>) -> Self {
        let pixel_count = inside.as_slice().iter().filter(|&&b| b).count();
        Self {
            inside,
            pixel_count,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.inside.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.inside.height()
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.pixel_count
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.pixel_count == 0
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.inside.get(x, y)
    }

    #[inline]
    pub fn grid(&self) -> &Grid<bool> {
        &self.inside
    }

    pub fn crop(&self, x0: usize, y0: usize, size: usize) -> RegionMask {
        RegionMask::new_allow_empty(self.inside.crop(x0, y0, size))
    }
}
