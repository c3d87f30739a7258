//! Cross-split spatial disjointness checking.

use crate::ingest::EventSet;

const KM_PER_DEGREE: f64 = 111.32;

/// Finds pairs of events in *different* splits whose square image
/// footprints (side `window_km`, centered on the event) overlap.
/// Distances use a planar approximation with cos(latitude) longitude
/// scaling, which is adequate at the 5 km footprint scale near the
/// equator. An empty result means the splits are spatially disjoint.
pub fn check_spatial_disjoint(events: &EventSet, window_km: f64) -> Vec<(String, String)> {
    let mut violations = Vec::new();
    let evs = &events.events;
    for i in 0..evs.len() {
        for j in (i + 1)..evs.len() {
            let (a, b) = (&evs[i], &evs[j]);
            if a.split == b.split {
                continue;
            }
            let mean_lat = ((a.lat + b.lat) / 2.0).to_radians();
            let dx_km = (a.lon - b.lon).abs() * KM_PER_DEGREE * mean_lat.cos();
            let dy_km = (a.lat - b.lat).abs() * KM_PER_DEGREE;
            if dx_km < window_km && dy_km < window_km {
                violations.push((a.event_id.clone(), b.event_id.clone()));
            }
        }
    }
    violations.sort();
    violations
}
