//! Brovey pan-sharpening of the visible bands.

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Sharpens three color bands at half resolution against a panchromatic
/// band at full resolution using the Brovey transform: each bilinearly
/// upsampled color band is scaled by `pan / mean(upsampled R, G, B)`.
/// Pixels whose upsampled mean is zero pass through unscaled.
pub fn pan_sharpen(
    rgb: [&Grid<f32>; 3],
    pan: &Grid<f32>,
) -> Result<[Grid<f32>; 3]> {
    let (cw, ch) = (rgb[0].width(), rgb[0].height());
    for band in &rgb[1..] {
        if !band.same_shape(rgb[0]) {
            return Err(Error::ShapeMismatch("color bands differ in shape".into()));
        }
    }
    if pan.width() != cw * 2 || pan.height() != ch * 2 {
        return Err(Error::ShapeMismatch(format!(
            "pan is {}x{}, expected exactly 2x the {cw}x{ch} color bands",
            pan.width(),
            pan.height()
        )));
    }

    let up: Vec<Grid<f32>> = rgb.iter().map(|b| upsample_bilinear_2x(b)).collect();
    let mut out: Vec<Grid<f32>> = up.clone();

    for i in 0..pan.len() {
        let mean = (up[0].as_slice()[i] as f64
            + up[1].as_slice()[i] as f64
            + up[2].as_slice()[i] as f64)
            / 3.0;
        if mean != 0.0 {
            let ratio = pan.as_slice()[i] as f64 / mean;
            for ch_grid in out.iter_mut() {
                let v = ch_grid.as_slice()[i] as f64 * ratio;
                ch_grid.as_mut_slice()[i] = v as f32;
            }
        }
    }

    let mut it = out.into_iter();
    Ok([
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
    ])
}

/// Doubles resolution with bilinear interpolation; output pixel centers
/// map to source coordinates via `(d + 0.5) / 2 - 0.5`, clamped at the
/// edges.
pub fn upsample_bilinear_2x(src: &Grid<f32>) -> Grid<f32> {
    let (w, h) = (src.width(), src.height());
    let (ow, oh) = (w * 2, h * 2);
    let mut out = Grid::filled(ow, oh, 0.0f32);
    for oy in 0..oh {
        let sy = ((oy as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = sy - y0 as f64;
        for ox in 0..ow {
            let sx = ((ox as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = sx - x0 as f64;
            let v = src.get(x0, y0) as f64 * (1.0 - fx) * (1.0 - fy)
                + src.get(x1, y0) as f64 * fx * (1.0 - fy)
                + src.get(x0, y1) as f64 * (1.0 - fx) * fy
                + src.get(x1, y1) as f64 * fx * fy;
            out.set(ox, oy, v as f32);
        }
    }
    out
}
