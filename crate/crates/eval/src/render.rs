//! Report artifacts: metrics JSON, confusion-matrix heatmap PNG with a
//! JSON sidecar holding the exact counts, and per-pixel class-map PNGs.

use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};

use forest_core::DriverClass;

use crate::{ConfusionMatrix, EvalError, MetricsReport};

/// Cell size of the confusion heatmap in pixels.
const CELL: u32 = 48;

/// Fixed class colors for map rendering, canonical order.
pub const CLASS_COLORS: [[u8; 3]; 4] = [
    [217, 95, 2],   // Plantation
    [27, 158, 119], // Smallholder Agriculture
    [230, 171, 2],  // Grassland/shrubland
    [117, 112, 179], // Other
];

const OUTSIDE_COLOR: [u8; 3] = [64, 64, 64];

/// Writes `metrics.json`, `confusion.png`, and `confusion.json` into
/// `out_dir`. The JSON report serializes `metrics` exactly; the heatmap
/// encodes counts as color intensity only, with the sidecar carrying the
/// numbers (rendering is deterministic for identical inputs).
pub fn render_report(metrics: &MetricsReport, out_dir: &Path) -> Result<(), EvalError> {
    fs::create_dir_all(out_dir)?;
    let json = serde_json::to_vec_pretty(metrics)?;
    fs::write(out_dir.join("metrics.json"), json)?;

    let png = render_confusion_png(&metrics.confusion);
    png.save(out_dir.join("confusion.png"))?;
    let sidecar = serde_json::to_vec_pretty(&metrics.confusion)?;
    fs::write(out_dir.join("confusion.json"), sidecar)?;
    Ok(())
}

/// Heatmap of the 4x4 confusion matrix: rows true, columns predicted,
/// intensity proportional to count / max count.
pub fn render_confusion_png(confusion: &ConfusionMatrix) -> RgbImage {
    let max = confusion.counts.iter().flatten().copied().max().unwrap_or(0);
    let size = CELL * 4 + 5; // 1px grid lines
    let mut img = RgbImage::from_pixel(size, size, Rgb([255, 255, 255]));
    for row in 0..4 {
        for col in 0..4 {
            let count = confusion.counts[row][col];
            let intensity = if max == 0 {
                0.0
            } else {
                count as f64 / max as f64
            };
            // white -> green ramp, diagonal slightly bluer
            let base = (255.0 * (1.0 - intensity)) as u8;
            let color = if row == col {
                Rgb([base, 255, base.saturating_add(40).min(255)])
            } else {
                Rgb([255, base, base])
            };
            let x0 = 1 + col as u32 * (CELL + 1);
            let y0 = 1 + row as u32 * (CELL + 1);
            for dy in 0..CELL {
                for dx in 0..CELL {
                    img.put_pixel(x0 + dx, y0 + dy, color);
                }
            }
        }
    }
    img
}

/// Renders a per-pixel class map; `None` marks pixels outside the region
/// of interest.
pub fn render_class_map(classes: &[Option<DriverClass>], width: usize, height: usize) -> RgbImage {
    assert_eq!(classes.len(), width * height);
    let mut img = RgbImage::new(width as u32, height as u32);
    for (i, class) in classes.iter().enumerate() {
        let rgb = match class {
            Some(c) => CLASS_COLORS[c.index()],
            None => OUTSIDE_COLOR,
        };
        img.put_pixel((i % width) as u32, (i / width) as u32, Rgb(rgb));
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{compute_metrics, metrics_from_confusion};

    #[test]
    fn identity_confusion_renders_diagonal_only() {
        let confusion = ConfusionMatrix {
            counts: [
                [5, 0, 0, 0],
                [0, 5, 0, 0],
                [0, 0, 5, 0],
                [0, 0, 0, 5],
            ],
        };
        let img = render_confusion_png(&confusion);
        // off-diagonal cells stay white, diagonal cells are saturated
        let diag = img.get_pixel(1 + CELL / 2, 1 + CELL / 2);
        let off = img.get_pixel(1 + CELL + 1 + CELL / 2, 1 + CELL / 2);
        assert_ne!(diag, off);
        assert_eq!(off, &Rgb([255, 255, 255]));
    }

    #[test]
    fn report_json_round_trips() {
        use forest_core::DriverClass::*;
        let pairs = vec![
            (Plantation, Plantation),
            (Other, GrasslandShrubland),
            (SmallholderAgriculture, SmallholderAgriculture),
        ];
        let metrics = compute_metrics(&pairs).unwrap();
        let dir = tempfile::tempdir().unwrap();
        render_report(&metrics, dir.path()).unwrap();
        let text = std::fs::read(dir.path().join("metrics.json")).unwrap();
        let back: MetricsReport = serde_json::from_slice(&text).unwrap();
        assert_eq!(back, metrics);

        let sidecar = std::fs::read(dir.path().join("confusion.json")).unwrap();
        let confusion: ConfusionMatrix = serde_json::from_slice(&sidecar).unwrap();
        assert_eq!(confusion, metrics.confusion);
        assert_eq!(metrics_from_confusion(confusion).accuracy, metrics.accuracy);
    }

    #[test]
    fn rendering_is_deterministic() {
        let confusion = ConfusionMatrix {
            counts: [
                [3, 1, 0, 0],
                [2, 7, 1, 0],
                [0, 0, 2, 2],
                [1, 0, 0, 9],
            ],
        };
        let a = render_confusion_png(&confusion);
        let b = render_confusion_png(&confusion);
        assert_eq!(a.as_raw(), b.as_raw());

        let dir = tempfile::tempdir().unwrap();
        let m = metrics_from_confusion(confusion);
        render_report(&m, dir.path()).unwrap();
        let first = std::fs::read(dir.path().join("metrics.json")).unwrap();
        render_report(&m, dir.path()).unwrap();
        let second = std::fs::read(dir.path().join("metrics.json")).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn class_map_uses_fixed_palette() {
        let classes = vec![
            Some(forest_core::DriverClass::Plantation),
            None,
            Some(forest_core::DriverClass::Other),
            None,
        ];
        let img = render_class_map(&classes, 2, 2);
        assert_eq!(img.get_pixel(0, 0).0, CLASS_COLORS[0]);
        assert_eq!(img.get_pixel(1, 0).0, OUTSIDE_COLOR);
        assert_eq!(img.get_pixel(0, 1).0, CLASS_COLORS[3]);
    }
}
