//! On-disk raster container: a directory holding `meta.json` plus one
//! raw `<band>.f32` file per band (little-endian IEEE-754 f32, row-major,
//! top-left first). Nodata pixels are written as the sentinel value in
//! every band and reconstructed into the shared mask on load.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::raster::{Band, DateInfo, LonLat, RasterImage};

pub const DEFAULT_NODATA_SENTINEL: f32 = -9999.0;

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    width: usize,
    height: usize,
    pixel_size_m: f64,
    origin_lon: f64,
    origin_lat: f64,
    bands: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    acquisition_date: Option<NaiveDate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    date_range: Option<(NaiveDate, NaiveDate)>,
    /// Sentinel marking nodata pixels; `null` means NaN is the sentinel.
    nodata: Option<f32>,
}

pub fn save_raster_dir(image: &RasterImage, dir: &Path) -> Result<()> {
    save_raster_dir_with_sentinel(image, dir, Some(DEFAULT_NODATA_SENTINEL))
}

pub fn save_raster_dir_with_sentinel(
    image: &RasterImage,
    dir: &Path,
    sentinel: Option<f32>,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let (acquisition_date, date_range) = match image.date {
        DateInfo::Acquired(d) => (Some(d), None),
        DateInfo::Range { start, end } => (None, Some((start, end))),
    };
    let meta = Meta {
        width: image.width(),
        height: image.height(),
        pixel_size_m: image.pixel_size_m,
        origin_lon: image.origin.lon,
        origin_lat: image.origin.lat,
        bands: image.bands().map(|(b, _)| b.name().to_string()).collect(),
        acquisition_date,
        date_range,
        nodata: sentinel,
    };
    let meta_json = serde_json::to_vec_pretty(&meta)?;
    fs::write(dir.join("meta.json"), meta_json)?;

    let fill = sentinel.unwrap_or(f32::NAN);
    let nd = image.nodata().as_slice();
    for (band, grid) in image.bands() {
        let mut file = fs::File::create(dir.join(format!("{}.f32", band.name())))?;
        let mut buf = Vec::with_capacity(grid.len() * 4);
        for (i, &v) in grid.as_slice().iter().enumerate() {
            let out = if nd[i] { fill } else { v };
            buf.extend_from_slice(&out.to_le_bytes());
        }
        file.write_all(&buf)?;
    }
    Ok(())
}

pub fn load_raster_dir(dir: &Path) -> Result<RasterImage> {
    let meta_bytes = fs::read(dir.join("meta.json"))?;
    let meta: Meta = serde_json::from_slice(&meta_bytes)?;
    let date = match (meta.acquisition_date, meta.date_range) {
        (Some(d), None) => DateInfo::Acquired(d),
        (None, Some((start, end))) => DateInfo::Range { start, end },
        _ => {
            return Err(Error::ValidationError(format!(
                "{}: exactly one of acquisition_date or date_range required",
                dir.display()
            )))
        }
    };

    let n = meta.width * meta.height;
    let mut bands = BTreeMap::new();
    let mut nodata = Grid::filled(meta.width, meta.height, false);
    for name in &meta.bands {
        let band = Band::from_name(name).ok_or_else(|| {
            Error::ValidationError(format!("{}: unknown band name {name:?}", dir.display()))
        })?;
        let path = dir.join(format!("{name}.f32"));
        let mut bytes = Vec::new();
        fs::File::open(&path)?.read_to_end(&mut bytes)?;
        if bytes.len() != n * 4 {
            return Err(Error::ValidationError(format!(
                "{}: expected {} bytes, found {}",
                path.display(),
                n * 4,
                bytes.len()
            )));
        }
        let mut data = Vec::with_capacity(n);
        for (i, chunk) in bytes.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            let is_nodata = match meta.nodata {
                Some(s) => v == s,
                None => v.is_nan(),
            };
            if is_nodata {
                nodata.as_mut_slice()[i] = true;
                // QA bands must stay {0,1} under the shared mask.
                data.push(0.0);
            } else {
                data.push(v);
            }
        }
        bands.insert(band, Grid::from_vec(meta.width, meta.height, data));
    }

    RasterImage::new(
        meta.pixel_size_m,
        LonLat {
            lon: meta.origin_lon,
            lat: meta.origin_lat,
        },
        date,
        bands,
        nodata,
    )
}
