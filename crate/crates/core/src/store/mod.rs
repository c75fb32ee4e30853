//! Result encoding (GeoJSON, mask PNG) and on-disk run bundles.

mod bundle;

use std::io::Cursor;
use std::path::PathBuf;

use image::{GrayImage, ImageFormat, Luma};
use serde_json::{json, Value};
use thiserror::Error;

use crate::geo::tile_footprint;
use crate::pipeline::{BinaryMask, RegionReport};

pub use bundle::{read_bundle, write_bundle, Bundle, GEOJSON_FILE, RUN_FILE, TILES_FILE};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Format(String),
}

/// Bundle-relative path of a tile's mask.
pub fn mask_file(tile_id: &str) -> String {
    format!("masks/{tile_id}.png")
}

/// Tile ids used in file names: ASCII letters, digits, `_` and `-` only.
pub fn is_safe_tile_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

/// FeatureCollection with one Feature per solar tile and a top-level
/// `totals` member. Keys are sorted, so equal reports give equal bytes.
pub fn export_geojson(report: &RegionReport) -> Value {
    let features: Vec<Value> = report
        .solar_tiles()
        .filter_map(|r| Some((r, r.estimate?)))
        .map(|(r, e)| {
            let t = &r.tile;
            let ring = tile_footprint(t).map(|f| f.ring_lonlat().to_vec()).unwrap_or_default();
            json!({
                "type": "Feature",
                "geometry": { "type": "Polygon", "coordinates": [ring] },
                "properties": {
                    "tile_id": t.tile_id,
                    "center_lat": t.center.lat_deg,
                    "center_lon": t.center.lon_deg,
                    "zoom": t.zoom,
                    "classifier_score": r.classifier_score,
                    "panel_area_m2": e.area_m2,
                    "panel_area_ft2": e.area_ft2,
                    "panel_count": e.panel_count,
                    "mask": mask_file(&t.tile_id),
                },
            })
        })
        .collect();
    json!({
        "type": "FeatureCollection",
        "features": features,
        "region_id": report.region_id,
        "totals": report.totals,
    })
}

pub fn geojson_bytes(report: &RegionReport) -> Vec<u8> {
    serde_json::to_vec(&export_geojson(report)).expect("json values serialize")
}

/// 8-bit grayscale PNG, 0 = background, 255 = panel.
pub fn encode_mask_png(m: &BinaryMask) -> Vec<u8> {
    let (w, h) = m.dimensions();
    let img = GrayImage::from_raw(w, h, m.bits().iter().map(|&b| b * 255).collect()).expect("buffer matches size");
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).expect("png encoding to memory");
    out.into_inner()
}

/// Inverse of [`encode_mask_png`]; rejects pixels other than 0 and 255.
pub fn decode_mask_png(bytes: &[u8]) -> Result<BinaryMask, StoreError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| StoreError::Format(format!("mask png: {e}")))?
        .to_luma8();
    let (w, h) = img.dimensions();
    let mut bits = Vec::with_capacity(img.len());
    for &Luma([v]) in img.pixels() {
        match v {
            0 => bits.push(0),
            255 => bits.push(1),
            v => return Err(StoreError::Format(format!("mask pixel value {v} is not 0 or 255"))),
        }
    }
    BinaryMask::from_bits(w, h, bits).ok_or_else(|| StoreError::Format("empty mask".into()))
}
