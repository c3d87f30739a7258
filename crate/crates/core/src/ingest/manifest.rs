//! JSON Lines event manifest parsing and validation.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::ingest::{
    group_driver, temporal_filter, EventSet, ForestLossEvent, Split, SplitCounts,
};

#[derive(Debug, Deserialize)]
struct ManifestRecord {
    event_id: String,
    lat: f64,
    lon: f64,
    year: i32,
    category: String,
    split: Split,
    polygon: Vec<Vec<[f64; 2]>>,
    image_dir: String,
    aux_path: String,
}

/// Loads a JSON Lines manifest (one event per line), applies driver
/// grouping and the temporal filter, and validates the result. Parse
/// failures carry the 1-based line number.
pub fn load_manifest(path: &Path) -> Result<EventSet> {
    let text = fs::read_to_string(path)?;
    if text.trim().is_empty() {
        return Err(Error::ManifestError {
            line: 0,
            message: "manifest is empty".into(),
        });
    }

    let mut events = Vec::new();
    let mut dropped = 0usize;
    let mut counts = SplitCounts::default();
    let mut seen_ids: HashSet<String> = HashSet::new();
    let mut duplicate_ids: Vec<String> = Vec::new();
    let mut bad_year_ids: Vec<String> = Vec::new();

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: ManifestRecord =
            serde_json::from_str(line).map_err(|e| Error::ManifestError {
                line: line_no,
                message: e.to_string(),
            })?;

        let driver = group_driver(&record.category).map_err(|e| Error::ManifestError {
            line: line_no,
            message: e.to_string(),
        })?;
        if !(2001..=2016).contains(&record.year) {
            bad_year_ids.push(record.event_id.clone());
            continue;
        }
        if !temporal_filter(&record.category, record.year)? {
            dropped += 1;
            continue;
        }
        if !seen_ids.insert(record.event_id.clone()) {
            duplicate_ids.push(record.event_id.clone());
            continue;
        }

        counts.counts[record.split.index()][driver.index()] += 1;
        events.push(ForestLossEvent {
            event_id: record.event_id,
            lat: record.lat,
            lon: record.lon,
            loss_year: record.year,
            original_category: record.category,
            driver,
            split: record.split,
            polygon: record
                .polygon
                .into_iter()
                .map(|ring| ring.into_iter().map(|[x, y]| (x, y)).collect())
                .collect(),
            image_dir: record.image_dir,
            aux_path: record.aux_path,
        });
    }

    if !duplicate_ids.is_empty() {
        return Err(Error::ValidationError(format!(
            "duplicate event ids: {}",
            duplicate_ids.join(", ")
        )));
    }
    if !bad_year_ids.is_empty() {
        return Err(Error::ValidationError(format!(
            "loss_year outside 2001..=2016 for events: {}",
            bad_year_ids.join(", ")
        )));
    }

    Ok(EventSet {
        events,
        counts,
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::DriverClass;
    use std::io::Write;

    fn record(id: &str, year: i32, category: &str, split: &str) -> String {
        format!(
            r#"{{"event_id":"{id}","lat":-1.5,"lon":110.2,"year":{year},"category":"{category}","split":"{split}","polygon":[[[10,10],[40,10],[40,40],[10,40]]],"image_dir":"scenes/{id}","aux_path":"aux/{id}.json"}}"#
        )
    }

    fn write_manifest(lines: &[String]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for line in lines {
            writeln!(f, "{line}").unwrap();
        }
        f
    }

    #[test]
    fn loads_and_counts_by_split_and_class() {
        let f = write_manifest(&[
            record("e1", 2014, "Oil palm plantation", "train"),
            record("e2", 2013, "Mining", "val"),
            record("e3", 2015, "Small-scale agriculture", "test"),
        ]);
        let set = load_manifest(f.path()).unwrap();
        assert_eq!(set.events.len(), 3);
        assert_eq!(
            set.counts.class_count(Split::Train, DriverClass::Plantation),
            1
        );
        assert_eq!(set.counts.split_total(Split::Val), 1);
        assert_eq!(set.counts.split_total(Split::Test), 1);
    }

    #[test]
    fn temporal_filter_applied_on_load() {
        let f = write_manifest(&[
            record("keep", 2013, "Grassland/shrubland", "train"),
            record("drop", 2010, "Grassland/shrubland", "train"),
        ]);
        let set = load_manifest(f.path()).unwrap();
        assert_eq!(set.events.len(), 1);
        assert_eq!(set.dropped, 1);
        assert_eq!(set.events[0].event_id, "keep");
    }

    #[test]
    fn empty_manifest_is_error() {
        let f = write_manifest(&[]);
        assert!(matches!(
            load_manifest(f.path()),
            Err(Error::ManifestError { .. })
        ));
    }

    #[test]
    fn parse_failure_reports_line() {
        let f = write_manifest(&[
            record("e1", 2014, "Mining", "train"),
            "{not json".to_string(),
        ]);
        match load_manifest(f.path()) {
            Err(Error::ManifestError { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected ManifestError, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let f = write_manifest(&[
            record("dup", 2014, "Mining", "train"),
            record("dup", 2014, "Mining", "test"),
        ]);
        match load_manifest(f.path()) {
            Err(Error::ValidationError(msg)) => assert!(msg.contains("dup")),
            other => panic!("expected ValidationError, got {other:?}"),
        }
    }

    #[test]
    fn deterministic_across_reloads() {
        let f = write_manifest(&[
            record("e1", 2014, "Oil palm plantation", "train"),
            record("e2", 2016, "Fish pond", "val"),
        ]);
        let a = load_manifest(f.path()).unwrap();
        let b = load_manifest(f.path()).unwrap();
        assert_eq!(a.events, b.events);
        assert_eq!(a.counts, b.counts);
    }
}
