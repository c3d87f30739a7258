//! Polygon rasterization onto a pixel grid.
//!
//! Containment rule: a pixel belongs to the region iff its center passes
//! the even-odd test against the union of rings. Centers sit at
//! `(x + 0.5, y + 0.5)` and are nudged by `+1e-9` on both axes so that
//! centers lying exactly on a boundary resolve deterministically. Holes
//! are expressed as additional rings (even-odd parity).

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::raster::RegionMask;

/// One polygon ring as `(x, y)` vertices in image pixel coordinates.
/// The ring may be explicitly closed (first == last) or implicitly closed.
pub type Ring = Vec<(f64, f64)>;

/// Offset applied to pixel centers before the even-odd test so boundary
/// contact resolves deterministically.
pub const CENTER_NUDGE: f64 = 1e-9;

/// Rasterizes `rings` onto a `width` x `height` grid by scanline even-odd
/// filling at nudged pixel centers.
pub fn rasterize_polygon(rings: &[Ring], width: usize, height: usize) -> Result<RegionMask> {
    let edges = collect_edges(rings)?;
    let mut inside = Grid::filled(width, height, false);
    let mut crossings: Vec<f64> = Vec::new();

    for y in 0..height {
        let yc = y as f64 + 0.5 + CENTER_NUDGE;
        crossings.clear();
        for &((x0, y0), (x1, y1)) in &edges {
            // Half-open span: an edge crosses the scanline iff yc lies
            // between the endpoint ordinates with exactly one strict side.
            if (y0 > yc) != (y1 > yc) {
                crossings.push(x0 + (yc - y0) * (x1 - x0) / (y1 - y0));
            }
        }
        if crossings.is_empty() {
            continue;
        }
        crossings.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // A center is inside iff the number of crossings strictly to its
        // right is odd, i.e. inside spans are [c[2k], c[2k+1]).
        for pair in crossings.chunks_exact(2) {
            let (start, end) = (pair[0], pair[1]);
            let first = (start - 0.5 - CENTER_NUDGE).ceil().max(0.0) as usize;
            for x in first..width {
                let xc = x as f64 + 0.5 + CENTER_NUDGE;
                if xc < start {
                    continue;
                }
                if xc >= end {
                    break;
                }
                inside.set(x, y, true);
            }
        }
    }

    RegionMask::new(inside)
}

fn collect_edges(rings: &[Ring]) -> Result<Vec<((f64, f64), (f64, f64))>> {
    if rings.is_empty() {
        return Err(Error::DegenerateGeometry("no rings".into()));
    }
    let mut edges = Vec::new();
    let mut total_area = 0.0;
    for ring in rings {
        let mut pts: Vec<(f64, f64)> = ring.clone();
        if pts.len() >= 2 && pts.first() == pts.last() {
            pts.pop();
        }
        let mut distinct = pts.clone();
        distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
        distinct.dedup();
        if distinct.len() < 3 {
            return Err(Error::DegenerateGeometry(format!(
                "ring has {} distinct vertices, need at least 3",
                distinct.len()
            )));
        }
        total_area += shoelace_area(&pts).abs();
        for i in 0..pts.len() {
            let a = pts[i];
            let b = pts[(i + 1) % pts.len()];
            if a.1 != b.1 {
                edges.push((a, b));
            }
        }
    }
    if total_area == 0.0 {
        return Err(Error::DegenerateGeometry("zero-area polygon".into()));
    }
    Ok(edges)
}

fn shoelace_area(pts: &[(f64, f64)]) -> f64 {
    let mut acc = 0.0;
    for i in 0..pts.len() {
        let (x0, y0) = pts[i];
        let (x1, y1) = pts[(i + 1) % pts.len()];
        acc += x0 * y1 - x1 * y0;
    }
    acc / 2.0
}
