//! Predictor tables and feature vector construction.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::raster::{ndvi, zonal_stats, Band, RasterImage, RegionMask};

use super::climatic::aggregate_climatic;
use super::{PredictorKind, CANONICAL_PREDICTORS};

/// A predictor raster with its own validity mask.
#[derive(Debug, Clone)]
pub struct GridWithMask {
    pub values: Grid<f32>,
    pub nodata: Grid<bool>,
}

impl GridWithMask {
    pub fn dense(values: Grid<f32>) -> Self {
        let nodata = Grid::filled(values.width(), values.height(), false);
        Self { values, nodata }
    }
}

/// All predictors available for one event. Grids are aligned to the
/// event image grid; series are daily values; absent entries are treated
/// as missing and flagged downstream.
#[derive(Debug, Clone, Default)]
pub struct PredictorTable {
    pub grids: BTreeMap<String, GridWithMask>,
    pub series: BTreeMap<String, Vec<(NaiveDate, f64)>>,
    pub scalars: BTreeMap<String, f64>,
    pub peat: Option<bool>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PredictorFile {
    width: usize,
    height: usize,
    #[serde(default)]
    grids: BTreeMap<String, String>,
    #[serde(default)]
    series: BTreeMap<String, Vec<(NaiveDate, f64)>>,
    #[serde(default)]
    scalars: BTreeMap<String, f64>,
    #[serde(default)]
    peat: Option<bool>,
}

impl PredictorTable {
    /// Loads the per-event predictor JSON; grid entries reference raw
    /// `.f32` files (little-endian, row-major) relative to the JSON's
    /// directory, with NaN marking missing cells.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read(path)?;
        let file: PredictorFile = serde_json::from_slice(&text)?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let n = file.width * file.height;

        let mut grids = BTreeMap::new();
        for (name, rel) in &file.grids {
            let mut bytes = Vec::new();
            fs::File::open(dir.join(rel))?.read_to_end(&mut bytes)?;
            if bytes.len() != n * 4 {
                return Err(Error::ValidationError(format!(
                    "grid {name}: expected {} bytes, found {}",
                    n * 4,
                    bytes.len()
                )));
            }
            let mut values = Vec::with_capacity(n);
            let mut mask = Vec::with_capacity(n);
            for chunk in bytes.chunks_exact(4) {
                let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
                mask.push(v.is_nan());
                values.push(if v.is_nan() { 0.0 } else { v });
            }
            grids.insert(
                name.clone(),
                GridWithMask {
                    values: Grid::from_vec(file.width, file.height, values),
                    nodata: Grid::from_vec(file.width, file.height, mask),
                },
            );
        }

        Ok(Self {
            grids,
            series: file.series,
            scalars: file.scalars,
            peat: file.peat,
        })
    }

    /// Adds the imaging predictors derived from an image: the six
    /// spectral bands that are present, plus NDVI computed from NIR and
    /// red. Band nodata carries over; NDVI additionally masks 0/0 pixels.
    pub fn merge_imaging(&mut self, image: &RasterImage) {
        for band in [
            Band::Red,
            Band::Green,
            Band::Blue,
            Band::Nir,
            Band::Swir1,
            Band::Swir2,
        ] {
            if let Ok(grid) = image.band(band) {
                self.grids.insert(
                    band.name().to_string(),
                    GridWithMask {
                        values: grid.clone(),
                        nodata: image.nodata().clone(),
                    },
                );
            }
        }
        if let (Ok(nir), Ok(red)) = (image.band(Band::Nir), image.band(Band::Red)) {
            if let Ok((values, undef)) = ndvi(nir, red) {
                let mut nodata = image.nodata().clone();
                for (i, &u) in undef.as_slice().iter().enumerate() {
                    if u {
                        nodata.as_mut_slice()[i] = true;
                    }
                }
                self.grids
                    .insert("ndvi".to_string(), GridWithMask { values, nodata });
            }
        }
    }
}

/// Feature vector before imputation: one optional value per canonical
/// value column plus one missing flag per predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFeatureVector {
    pub values: Vec<Option<f64>>,
    pub missing: Vec<bool>,
}

/// Builds the raw feature vector for one event. Grid predictors are
/// reduced by zonal statistics over the loss-region mask, circular ones
/// through their cos/sin components, series through the five-year daily
/// window. Absent predictors are flagged; if everything is missing the
/// event is unusable.
pub fn build_feature_vector(
    table: &PredictorTable,
    mask: &RegionMask,
    loss_year: i32,
) -> Result<RawFeatureVector> {
    if mask.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let mut values = Vec::new();
    let mut missing = Vec::new();

    for spec in CANONICAL_PREDICTORS {
        match spec.kind {
            PredictorKind::Grid => {
                let stats = table
                    .grids
                    .get(spec.name)
                    .and_then(|g| zonal_stats(&g.values, mask, &g.nodata).ok());
                push_stats4(&mut values, stats.map(|s| [s.mean, s.std, s.min, s.max]));
                missing.push(stats.is_none());
            }
            PredictorKind::Circular => {
                let comps = table.grids.get(spec.name).and_then(|g| {
                    // values are centidegrees
                    let cos = g
                        .values
                        .map(|v| ((v as f64 * 0.01).to_radians().cos()) as f32);
                    let sin = g
                        .values
                        .map(|v| ((v as f64 * 0.01).to_radians().sin()) as f32);
                    let c = zonal_stats(&cos, mask, &g.nodata).ok()?;
                    let s = zonal_stats(&sin, mask, &g.nodata).ok()?;
                    Some(([c.mean, c.std, c.min, c.max], [s.mean, s.std, s.min, s.max]))
                });
                match comps {
                    Some((c, s)) => {
                        push_stats4(&mut values, Some(c));
                        push_stats4(&mut values, Some(s));
                        missing.push(false);
                    }
                    None => {
                        push_stats4(&mut values, None);
                        push_stats4(&mut values, None);
                        missing.push(true);
                    }
                }
            }
            PredictorKind::Climatic => {
                let agg = table
                    .series
                    .get(spec.name)
                    .and_then(|s| aggregate_climatic(s, loss_year).ok());
                match agg {
                    Some((mean, min, max)) => {
                        values.extend([Some(mean), Some(min), Some(max)]);
                        missing.push(false);
                    }
                    None => {
                        values.extend([None, None, None]);
                        missing.push(true);
                    }
                }
            }
            PredictorKind::Scalar => {
                let v = table.scalars.get(spec.name).copied().filter(|v| v.is_finite());
                values.push(v);
                missing.push(v.is_none());
            }
            PredictorKind::Flag => match spec.name {
                "peat" => {
                    let v = table.peat.map(|b| if b { 1.0 } else { 0.0 });
                    values.push(v);
                    missing.push(v.is_none());
                }
                other => {
                    return Err(Error::FeatureError(format!(
                        "unhandled flag predictor {other}"
                    )))
                }
            },
        }
    }

    if missing.iter().all(|&m| m) {
        return Err(Error::FeatureError("all predictors missing".into()));
    }
    Ok(RawFeatureVector { values, missing })
}

fn push_stats4(values: &mut Vec<Option<f64>>, stats: Option<[f64; 4]>) {
    match stats {
        Some(s) => values.extend(s.into_iter().map(Some)),
        None => values.extend([None, None, None, None]),
    }
}

/// Training-set column means used to fill missing values. Columns that
/// are missing in every training vector fall back to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputeParams {
    pub column_means: Vec<f64>,
}

impl ImputeParams {
    pub fn fit(train: &[&RawFeatureVector]) -> Result<Self> {
        let first = train
            .first()
            .ok_or_else(|| Error::FeatureError("no training vectors".into()))?;
        let n_cols = first.values.len();
        let mut sums = vec![0.0f64; n_cols];
        let mut counts = vec![0usize; n_cols];
        for vector in train {
            if vector.values.len() != n_cols {
                return Err(Error::FeatureError("inconsistent vector length".into()));
            }
            for (i, v) in vector.values.iter().enumerate() {
                if let Some(v) = v {
                    sums[i] += v;
                    counts[i] += 1;
                }
            }
        }
        let column_means = sums
            .into_iter()
            .zip(counts)
            .map(|(s, c)| if c > 0 { s / c as f64 } else { 0.0 })
            .collect();
        Ok(Self { column_means })
    }

    /// Fills missing values and appends the flag block, producing the
    /// final fixed-length vector.
    pub fn apply(&self, raw: &RawFeatureVector) -> Vec<f64> {
        let mut out = Vec::with_capacity(raw.values.len() + raw.missing.len());
        for (i, v) in raw.values.iter().enumerate() {
            out.push(v.unwrap_or(self.column_means[i]));
        }
        out.extend(raw.missing.iter().map(|&m| if m { 1.0 } else { 0.0 }));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{feature_vector_len, value_column_count};

    fn mask_3px() -> RegionMask {
        let mut g = Grid::filled(4, 4, false);
        g.set(0, 0, true);
        g.set(1, 0, true);
        g.set(2, 0, true);
        RegionMask::new(g).unwrap()
    }

    fn table_with_elevation(value: f32) -> PredictorTable {
        let mut t = PredictorTable::default();
        t.grids.insert(
            "elevation".into(),
            GridWithMask::dense(Grid::filled(4, 4, value)),
        );
        t.scalars.insert("dist_road_km".into(), 3.0);
        t
    }

    #[test]
    fn constant_grid_stats() {
        let raw = build_feature_vector(&table_with_elevation(100.0), &mask_3px(), 2014).unwrap();
        // elevation occupies columns 8..12 (after aspect's 8)
        assert_eq!(raw.values[8], Some(100.0));
        assert_eq!(raw.values[9], Some(0.0));
        assert_eq!(raw.values[10], Some(100.0));
        assert_eq!(raw.values[11], Some(100.0));
        assert_eq!(raw.values.len(), value_column_count());
        assert_eq!(raw.missing.len(), CANONICAL_PREDICTORS.len());
    }

    #[test]
    fn peat_encoded_as_binary() {
        let mut t = table_with_elevation(10.0);
        t.peat = Some(true);
        let raw = build_feature_vector(&t, &mask_3px(), 2014).unwrap();
        // peat is the single column after the 16 climatic triples
        let peat_col = 16 + 16 * 3;
        assert_eq!(raw.values[peat_col], Some(1.0));
    }

    #[test]
    fn ndvi_population_std_matches_oracle() {
        let mut t = PredictorTable::default();
        let mut values = Grid::filled(4, 4, 0.0f32);
        values.set(0, 0, 0.1);
        values.set(1, 0, 0.5);
        values.set(2, 0, 0.9);
        t.grids.insert("ndvi".into(), GridWithMask::dense(values));
        let raw = build_feature_vector(&t, &mask_3px(), 2014).unwrap();
        // ndvi block: after aspect(8) elevation(4) slope(4) climatic(48)
        // peat(1) roads(1) city(1) blue(4) green(4) -> offset 75
        let base = 8 + 4 + 4 + 48 + 3 + 4 + 4;
        let mean = raw.values[base].unwrap();
        let std = raw.values[base + 1].unwrap();
        assert!((mean - 0.5).abs() < 1e-6);
        let expected_std = (((0.4f64).powi(2) * 2.0) / 3.0).sqrt();
        assert!((std - expected_std).abs() < 1e-6, "std {std}");
        assert!((std - 0.3266).abs() < 1e-4);
    }

    #[test]
    fn outside_pixels_do_not_leak() {
        let mut a = table_with_elevation(50.0);
        let mut b = table_with_elevation(50.0);
        // perturb a pixel outside the mask in table b only
        b.grids.get_mut("elevation").unwrap().values.set(3, 3, 9000.0);
        let _ = &mut a;
        let ra = build_feature_vector(&a, &mask_3px(), 2014).unwrap();
        let rb = build_feature_vector(&b, &mask_3px(), 2014).unwrap();
        assert_eq!(ra, rb);
    }

    #[test]
    fn all_missing_is_error() {
        let t = PredictorTable::default();
        assert!(matches!(
            build_feature_vector(&t, &mask_3px(), 2014),
            Err(Error::FeatureError(_))
        ));
    }

    #[test]
    fn imputation_uses_training_means_and_flags() {
        let t1 = table_with_elevation(10.0);
        let t2 = table_with_elevation(30.0);
        let mut t3 = PredictorTable::default();
        t3.scalars.insert("dist_city_km".into(), 1.0);
        let r1 = build_feature_vector(&t1, &mask_3px(), 2014).unwrap();
        let r2 = build_feature_vector(&t2, &mask_3px(), 2014).unwrap();
        let r3 = build_feature_vector(&t3, &mask_3px(), 2014).unwrap();
        let params = ImputeParams::fit(&[&r1, &r2]).unwrap();
        let v3 = params.apply(&r3);
        assert_eq!(v3.len(), feature_vector_len());
        // elevation mean column imputed with (10+30)/2
        assert_eq!(v3[8], 20.0);
        // elevation missing flag set for r3
        let flag_base = value_column_count();
        assert_eq!(v3[flag_base + 1], 1.0);
        // and unset for a vector that has it
        let v1 = params.apply(&r1);
        assert_eq!(v1[flag_base + 1], 0.0);
    }
}
