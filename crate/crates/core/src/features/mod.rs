//! Per-event auxiliary feature vectors: spatial aggregation of predictor
//! grids over the loss region and temporal aggregation of daily climatic
//! series over the five pre-event years.

mod builder;
mod climatic;
mod standardize;

pub use builder::{build_feature_vector, GridWithMask, ImputeParams, PredictorTable};
pub use climatic::aggregate_climatic;
pub use standardize::Standardizer;

/// How a predictor is reduced to feature columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorKind {
    /// Raster predictor: (mean, std, min, max) over the loss region.
    Grid,
    /// Circular raster predictor (aspect): decomposed into cos/sin
    /// components before statistics, 8 columns, to keep the 0/360 degree
    /// wraparound out of the means.
    Circular,
    /// Daily series: (mean, min, max) over the five pre-event years.
    Climatic,
    /// Point value passed through.
    Scalar,
    /// Boolean encoded as 0/1.
    Flag,
}

impl PredictorKind {
    pub fn column_count(self) -> usize {
        match self {
            PredictorKind::Grid => 4,
            PredictorKind::Circular => 8,
            PredictorKind::Climatic => 3,
            PredictorKind::Scalar | PredictorKind::Flag => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredictorSpec {
    pub name: &'static str,
    pub kind: PredictorKind,
}

/// The canonical predictor ordering: groups in the fixed order
/// topographic, climatic, soil, accessibility, proximity, imaging;
/// alphabetical within each group. Every feature vector follows this
/// layout, values first, then one missing flag per predictor.
pub const CANONICAL_PREDICTORS: &[PredictorSpec] = &[
    // topographic
    PredictorSpec { name: "aspect", kind: PredictorKind::Circular },
    PredictorSpec { name: "elevation", kind: PredictorKind::Grid },
    PredictorSpec { name: "slope", kind: PredictorKind::Grid },
    // climatic (16 daily series)
    PredictorSpec { name: "air_pressure_surface", kind: PredictorKind::Climatic },
    PredictorSpec { name: "albedo_surface", kind: PredictorKind::Climatic },
    PredictorSpec { name: "clear_sky_longwave_flux", kind: PredictorKind::Climatic },
    PredictorSpec { name: "clear_sky_solar_flux", kind: PredictorKind::Climatic },
    PredictorSpec { name: "direct_evaporation_bare_soil", kind: PredictorKind::Climatic },
    PredictorSpec { name: "ground_heat_net_flux", kind: PredictorKind::Climatic },
    PredictorSpec { name: "ground_level_precipitation", kind: PredictorKind::Climatic },
    PredictorSpec { name: "latent_heat_net_flux", kind: PredictorKind::Climatic },
    PredictorSpec { name: "longwave_radiation_flux", kind: PredictorKind::Climatic },
    PredictorSpec { name: "potential_evaporation_rate", kind: PredictorKind::Climatic },
    PredictorSpec { name: "sensible_heat_net_flux", kind: PredictorKind::Climatic },
    PredictorSpec { name: "shortwave_radiation_flux", kind: PredictorKind::Climatic },
    PredictorSpec { name: "specific_humidity", kind: PredictorKind::Climatic },
    PredictorSpec { name: "volumetric_soil_moisture", kind: PredictorKind::Climatic },
    PredictorSpec { name: "water_runoff_surface", kind: PredictorKind::Climatic },
    PredictorSpec { name: "wind_10m", kind: PredictorKind::Climatic },
    // soil
    PredictorSpec { name: "peat", kind: PredictorKind::Flag },
    // accessibility
    PredictorSpec { name: "dist_road_km", kind: PredictorKind::Scalar },
    // proximity
    PredictorSpec { name: "dist_city_km", kind: PredictorKind::Scalar },
    // imaging
    PredictorSpec { name: "blue", kind: PredictorKind::Grid },
    PredictorSpec { name: "green", kind: PredictorKind::Grid },
    PredictorSpec { name: "ndvi", kind: PredictorKind::Grid },
    PredictorSpec { name: "nir", kind: PredictorKind::Grid },
    PredictorSpec { name: "red", kind: PredictorKind::Grid },
    PredictorSpec { name: "swir1", kind: PredictorKind::Grid },
    PredictorSpec { name: "swir2", kind: PredictorKind::Grid },
];

/// Number of value columns (before the missing-flag block).
pub fn value_column_count() -> usize {
    CANONICAL_PREDICTORS
        .iter()
        .map(|p| p.kind.column_count())
        .sum()
}

/// Total feature vector length: values plus one flag per predictor.
pub fn feature_vector_len() -> usize {
    value_column_count() + CANONICAL_PREDICTORS.len()
}

/// Column names in canonical order, flags last.
pub fn column_names() -> Vec<String> {
    let mut names = Vec::with_capacity(feature_vector_len());
    for spec in CANONICAL_PREDICTORS {
        match spec.kind {
            PredictorKind::Grid => {
                for stat in ["mean", "std", "min", "max"] {
                    names.push(format!("{}_{stat}", spec.name));
                }
            }
            PredictorKind::Circular => {
                for comp in ["cos", "sin"] {
                    for stat in ["mean", "std", "min", "max"] {
                        names.push(format!("{}_{comp}_{stat}", spec.name));
                    }
                }
            }
            PredictorKind::Climatic => {
                for stat in ["mean", "min", "max"] {
                    names.push(format!("{}_{stat}", spec.name));
                }
            }
            PredictorKind::Scalar | PredictorKind::Flag => names.push(spec.name.to_string()),
        }
    }
    for spec in CANONICAL_PREDICTORS {
        names.push(format!("missing_{}", spec.name));
    }
    names
}

/// Which predictor columns feed a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    /// Only the visible-band imaging predictors.
    Visible,
    /// Everything.
    VisibleAux,
}

/// Indices (into the full canonical vector) selected by `set`.
pub fn feature_set_columns(set: FeatureSet) -> Vec<usize> {
    match set {
        FeatureSet::VisibleAux => (0..feature_vector_len()).collect(),
        FeatureSet::Visible => {
            let visible = ["red", "green", "blue"];
            let names = column_names();
            names
                .iter()
                .enumerate()
                .filter(|(_, n)| {
                    visible.iter().any(|v| {
                        n.as_str() == format!("missing_{v}")
                            || ["mean", "std", "min", "max"]
                                .iter()
                                .any(|s| n.as_str() == format!("{v}_{s}"))
                    })
                })
                .map(|(i, _)| i)
                .collect()
        }
    }
}
