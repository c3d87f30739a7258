//! Scene quality filtering, per-pixel median compositing with the
//! five-least-cloudy fallback, and inference-time image selection.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::raster::{load_raster_dir, Band, DateInfo, RasterImage};

/// Scene acceptance thresholds: fewer than 50% cloudy pixels and exactly
/// 0% cirrus pixels.
pub const CLOUD_FRACTION_MAX: f64 = 0.5;

/// Minimum number of accepted scenes before the least-cloudy fallback
/// engages.
pub const MIN_ACCEPTED_SCENES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeConfig {
    /// Exclude cloud-flagged pixels per pixel when compositing. Whole-scene
    /// filtering alone reproduces the published behavior; per-pixel
    /// exclusion is an extension and degenerates to it for clear scenes.
    pub exclude_cloud_pixels: bool,
}

impl Default for CompositeConfig {
    fn default() -> Self {
        Self {
            exclude_cloud_pixels: true,
        }
    }
}

/// One candidate scene with its quality fractions computed from the QA
/// bands over non-nodata pixels.
#[derive(Debug, Clone)]
pub struct Scene {
    pub id: String,
    pub image: RasterImage,
    pub cloud_fraction: f64,
    pub cirrus_fraction: f64,
}

impl Scene {
    /// Wraps an image, computing cloud/cirrus fractions. Both QA bands
    /// are required.
    pub fn new(id: String, image: RasterImage) -> Result<Self> {
        let cloud_fraction = image.flag_fraction(Band::QaCloud)?;
        let cirrus_fraction = image.flag_fraction(Band::QaCirrus)?;
        Ok(Self {
            id,
            image,
            cloud_fraction,
            cirrus_fraction,
        })
    }

    pub fn acquisition_date(&self) -> Result<NaiveDate> {
        match self.image.date {
            DateInfo::Acquired(d) => Ok(d),
            DateInfo::Range { .. } => Err(Error::ValidationError(format!(
                "scene {} carries a date range instead of an acquisition date",
                self.id
            ))),
        }
    }
}

/// Per-event collection of accepted scenes plus exactly one composite.
#[derive(Debug, Clone)]
pub struct SceneSet {
    pub event_id: String,
    pub scenes: Vec<Scene>,
    pub composite: RasterImage,
    pub time_window: (i32, i32),
}

/// Four-year acquisition window starting the year after the event; events
/// before 2012 fall back to 2013-2016 because clear imagery begins in
/// 2013.
pub fn compute_time_window(loss_year: i32) -> Result<(i32, i32)> {
    if !(2001..=2016).contains(&loss_year) {
        return Err(Error::ValidationError(format!(
            "loss_year {loss_year} outside 2001..=2016"
        )));
    }
    if loss_year >= 2012 {
        Ok((loss_year + 1, loss_year + 4))
    } else {
        Ok((2013, 2016))
    }
}

/// Keeps scenes with cloud fraction strictly below 50% and zero cirrus.
pub fn filter_scenes(scenes: &[Scene]) -> Result<Vec<Scene>> {
    for scene in scenes {
        if !scene.image.has_band(Band::QaCloud) {
            return Err(Error::MissingBand(Band::QaCloud));
        }
        if !scene.image.has_band(Band::QaCirrus) {
            return Err(Error::MissingBand(Band::QaCirrus));
        }
    }
    Ok(scenes
        .iter()
        .filter(|s| s.cloud_fraction < CLOUD_FRACTION_MAX && s.cirrus_fraction == 0.0)
        .cloned()
        .collect())
}

/// Per-band, per-pixel median over the scenes in which the pixel is valid
/// (not nodata and, optionally, not cloud-flagged). Even counts take the
/// arithmetic mean of the two middle values; pixels valid in no scene
/// become nodata.
pub fn median_composite(
    scenes: &[&Scene],
    time_window: (i32, i32),
    config: &CompositeConfig,
) -> Result<RasterImage> {
    let first = scenes.first().ok_or(Error::NoScenes)?;
    let (w, h) = (first.image.width(), first.image.height());
    let band_set = first.image.band_set();
    for s in &scenes[1..] {
        if s.image.width() != w || s.image.height() != h {
            return Err(Error::ShapeMismatch(format!(
                "scene {} is {}x{}, expected {w}x{h}",
                s.id,
                s.image.width(),
                s.image.height()
            )));
        }
        if s.image.band_set() != band_set {
            return Err(Error::ValidationError(format!(
                "scene {} band set differs from the first scene",
                s.id
            )));
        }
    }

    // Per-pixel validity per scene, shared across bands.
    let valid: Vec<Vec<bool>> = scenes
        .iter()
        .map(|s| {
            let nd = s.image.nodata().as_slice();
            let cloud = if config.exclude_cloud_pixels {
                s.image.band(Band::QaCloud).ok().map(|g| g.as_slice())
            } else {
                None
            };
            (0..w * h)
                .map(|i| !nd[i] && cloud.map_or(true, |c| c[i] != 1.0))
                .collect()
        })
        .collect();

    let mut nodata = Grid::filled(w, h, false);
    for i in 0..w * h {
        if !valid.iter().any(|v| v[i]) {
            nodata.as_mut_slice()[i] = true;
        }
    }

    let mut bands = BTreeMap::new();
    let mut stack: Vec<f32> = Vec::with_capacity(scenes.len());
    for &band in &band_set {
        let grids: Vec<&Grid<f32>> = scenes
            .iter()
            .map(|s| s.image.band(band).expect("band set checked"))
            .collect();
        let mut out = Grid::filled(w, h, 0.0f32);
        for i in 0..w * h {
            stack.clear();
            for (scene_idx, grid) in grids.iter().enumerate() {
                if valid[scene_idx][i] {
                    stack.push(grid.as_slice()[i]);
                }
            }
            if stack.is_empty() {
                continue;
            }
            stack.sort_by(f32::total_cmp);
            let n = stack.len();
            let median = if n % 2 == 1 {
                stack[n / 2]
            } else {
                ((stack[n / 2 - 1] as f64 + stack[n / 2] as f64) / 2.0) as f32
            };
            out.as_mut_slice()[i] = median;
        }
        bands.insert(band, out);
    }

    // Median of {0,1} QA values can land on 0.5 for even counts; clamp to
    // the flag domain by rounding half up.
    for band in [Band::QaCloud, Band::QaCirrus] {
        if let Some(grid) = bands.get_mut(&band) {
            for v in grid.as_mut_slice() {
                *v = if *v >= 0.5 { 1.0 } else { 0.0 };
            }
        }
    }

    let date = DateInfo::Range {
        start: NaiveDate::from_ymd_opt(time_window.0, 1, 1).unwrap(),
        end: NaiveDate::from_ymd_opt(time_window.1, 12, 31).unwrap(),
    };
    RasterImage::new(
        first.image.pixel_size_m,
        first.image.origin,
        date,
        bands,
        nodata,
    )
}

/// Builds the per-event scene set: accepted scenes plus one composite.
/// The composite uses all accepted scenes when at least five exist,
/// otherwise the five least-cloudy candidates (ties broken by earlier
/// acquisition date, then lexicographic scene id).
pub fn build_scene_set(
    event_id: &str,
    loss_year: i32,
    candidates: Vec<Scene>,
    config: &CompositeConfig,
) -> Result<SceneSet> {
    if candidates.is_empty() {
        return Err(Error::NoScenes);
    }
    let time_window = compute_time_window(loss_year)?;
    for scene in &candidates {
        let year = scene.acquisition_date()?.format("%Y").to_string();
        let year: i32 = year.parse().unwrap();
        if year < time_window.0 || year > time_window.1 {
            return Err(Error::ValidationError(format!(
                "scene {} dated {year} lies outside the window {}..={}",
                scene.id, time_window.0, time_window.1
            )));
        }
    }

    let accepted = filter_scenes(&candidates)?;
    let composite_input: Vec<&Scene> = if accepted.len() >= MIN_ACCEPTED_SCENES {
        accepted.iter().collect()
    } else {
        let mut ranked: Vec<&Scene> = candidates.iter().collect();
        ranked.sort_by(|a, b| {
            a.cloud_fraction
                .partial_cmp(&b.cloud_fraction)
                .unwrap()
                .then_with(|| {
                    a.acquisition_date()
                        .unwrap()
                        .cmp(&b.acquisition_date().unwrap())
                })
                .then_with(|| a.id.cmp(&b.id))
        });
        ranked.truncate(MIN_ACCEPTED_SCENES);
        ranked
    };
    let composite = median_composite(&composite_input, time_window, config)?;

    Ok(SceneSet {
        event_id: event_id.to_string(),
        scenes: accepted,
        composite,
        time_window,
    })
}

/// Picks the image used at inference: the accepted scene closest to
/// July 1 of the loss year (ties resolved toward the earlier date), or
/// the composite when no accepted scene exists.
pub fn select_inference_image<'a>(scene_set: &'a SceneSet, loss_year: i32) -> &'a RasterImage {
    let anchor = NaiveDate::from_ymd_opt(loss_year, 7, 1).unwrap();
    scene_set
        .scenes
        .iter()
        .min_by_key(|s| {
            let date = s.acquisition_date().expect("accepted scenes carry dates");
            let dist = (date - anchor).num_days().abs();
            (dist, date)
        })
        .map(|s| &s.image)
        .unwrap_or(&scene_set.composite)
}

/// Loads every `scene_*` subdirectory of `dir` as a candidate scene.
/// Directories are visited in lexicographic order so results are
/// deterministic.
pub fn load_candidate_scenes(dir: &Path) -> Result<Vec<Scene>> {
    let mut names: Vec<String> = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().to_string();
        if entry.file_type()?.is_dir() && name.starts_with("scene_") {
            names.push(name);
        }
    }
    names.sort();
    let mut scenes = Vec::with_capacity(names.len());
    for name in names {
        let image = load_raster_dir(&dir.join(&name))?;
        scenes.push(Scene::new(name, image)?);
    }
    Ok(scenes)
}
