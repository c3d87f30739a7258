//! Forest loss event ingestion: driver grouping, the pre-2012 temporal
//! filter, manifest loading, and split disjointness checks.

mod manifest;
mod spatial;

pub use manifest::load_manifest;
pub use spatial::check_spatial_disjoint;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Ring;

/// The four driver classes, in canonical order. This ordering is used for
/// all argmax tie-breaking and confusion-matrix axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DriverClass {
    Plantation,
    SmallholderAgriculture,
    GrasslandShrubland,
    Other,
}

impl DriverClass {
    pub const ALL: [DriverClass; 4] = [
        DriverClass::Plantation,
        DriverClass::SmallholderAgriculture,
        DriverClass::GrasslandShrubland,
        DriverClass::Other,
    ];

    pub fn index(self) -> usize {
        match self {
            DriverClass::Plantation => 0,
            DriverClass::SmallholderAgriculture => 1,
            DriverClass::GrasslandShrubland => 2,
            DriverClass::Other => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<DriverClass> {
        DriverClass::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            DriverClass::Plantation => "Plantation",
            DriverClass::SmallholderAgriculture => "Smallholder Agriculture",
            DriverClass::GrasslandShrubland => "Grassland/shrubland",
            DriverClass::Other => "Other",
        }
    }
}

impl fmt::Display for DriverClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The twelve annotated driver categories.
pub const CATEGORIES: [&str; 12] = [
    "Oil palm plantation",
    "Timber plantation",
    "Other large-scale plantations",
    "Grassland/shrubland",
    "Small-scale agriculture",
    "Small-scale mixed plantation",
    "Small-scale oil palm plantation",
    "Mining",
    "Fish pond",
    "Logging road",
    "Secondary forest",
    "Other",
];

/// Maps an annotated category onto its driver class.
pub fn group_driver(category: &str) -> Result<DriverClass> {
    match category {
        "Oil palm plantation" | "Timber plantation" | "Other large-scale plantations" => {
            Ok(DriverClass::Plantation)
        }
        "Grassland/shrubland" => Ok(DriverClass::GrasslandShrubland),
        "Small-scale agriculture"
        | "Small-scale mixed plantation"
        | "Small-scale oil palm plantation" => Ok(DriverClass::SmallholderAgriculture),
        "Mining" | "Fish pond" | "Logging road" | "Secondary forest" | "Other" => {
            Ok(DriverClass::Other)
        }
        other => Err(Error::UnknownCategory(other.to_string())),
    }
}

/// Categories whose appearance changes over time; events before 2012 are
/// dropped for these because clear imagery only begins in 2013.
const DROP_PRE_2012: [&str; 3] = ["Grassland/shrubland", "Logging road", "Secondary forest"];

/// Returns `true` when the event is kept: everything from 2012 onward,
/// and pre-2012 events unless their category is time-sensitive.
pub fn temporal_filter(category: &str, loss_year: i32) -> Result<bool> {
    if !CATEGORIES.contains(&category) {
        return Err(Error::UnknownCategory(category.to_string()));
    }
    Ok(loss_year >= 2012 || !DROP_PRE_2012.contains(&category))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn index(self) -> usize {
        match self {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// One annotated forest loss event.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestLossEvent {
    pub event_id: String,
    pub lat: f64,
    pub lon: f64,
    pub loss_year: i32,
    pub original_category: String,
    pub driver: DriverClass,
    pub split: Split,
    /// Loss polygon rings in pixel coordinates of the associated image.
    pub polygon: Vec<Ring>,
    pub image_dir: String,
    pub aux_path: String,
}

/// Per-split, per-class event counts (rows: split, columns: class).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitCounts {
    pub counts: [[usize; 4]; 3],
}

impl SplitCounts {
    pub fn split_total(&self, split: Split) -> usize {
        self.counts[split.index()].iter().sum()
    }

    pub fn class_count(&self, split: Split, class: DriverClass) -> usize {
        self.counts[split.index()][class.index()]
    }
}

/// The loaded event set, with grouping and the temporal filter applied.
#[derive(Debug, Clone)]
pub struct EventSet {
    pub events: Vec<ForestLossEvent>,
    pub counts: SplitCounts,
    /// Manifest records removed by the temporal filter.
    pub dropped: usize,
}

impl EventSet {
    pub fn split_events(&self, split: Split) -> impl Iterator<Item = &ForestLossEvent> {
        self.events.iter().filter(move |e| e.split == split)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grouping_matches_published_table() {
        assert_eq!(group_driver("Oil palm plantation").unwrap(), DriverClass::Plantation);
        assert_eq!(group_driver("Fish pond").unwrap(), DriverClass::Other);
        assert_eq!(
            group_driver("Small-scale mixed plantation").unwrap(),
            DriverClass::SmallholderAgriculture
        );
        assert_eq!(
            group_driver("Grassland/shrubland").unwrap(),
            DriverClass::GrasslandShrubland
        );
    }

    #[test]
    fn grouping_is_total_and_surjective() {
        let mut seen = [false; 4];
        for cat in CATEGORIES {
            seen[group_driver(cat).unwrap().index()] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn unknown_category_rejected() {
        assert!(matches!(
            group_driver("Urban sprawl"),
            Err(Error::UnknownCategory(_))
        ));
    }

    #[test]
    fn temporal_filter_drops_only_listed_classes_pre_2012() {
        assert!(!temporal_filter("Grassland/shrubland", 2010).unwrap());
        assert!(temporal_filter("Grassland/shrubland", 2013).unwrap());
        assert!(temporal_filter("Mining", 2005).unwrap());
        assert!(!temporal_filter("Logging road", 2011).unwrap());
        assert!(!temporal_filter("Secondary forest", 2001).unwrap());
        // boundary: 2012 itself is kept for every category
        for cat in CATEGORIES {
            assert!(temporal_filter(cat, 2012).unwrap());
        }
    }
}
