use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{decode_mask_png, encode_mask_png, geojson_bytes, is_safe_tile_id, mask_file, StoreError};
use crate::pipeline::{RegionReport, Totals};

pub const RUN_FILE: &str = "run.json";
pub const GEOJSON_FILE: &str = "results.geojson";
pub const TILES_FILE: &str = "tiles.csv";

#[derive(Serialize, Deserialize)]
struct RunFile {
    config: Value,
    report: RegionReport,
}

/// A run directory loaded back from disk, masks included.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub dir: PathBuf,
    pub config: Value,
    pub report: RegionReport,
}

fn write(path: PathBuf, bytes: &[u8]) -> Result<(), StoreError> {
    fs::write(&path, bytes).map_err(|source| StoreError::Io { path, source })
}

fn read(path: PathBuf) -> Result<Vec<u8>, StoreError> {
    fs::read(&path).map_err(|source| StoreError::Io { path, source })
}

fn tiles_csv(report: &RegionReport) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["tile_id", "lat", "lon", "score", "area_m2", "area_ft2", "panel_count"])
        .expect("in-memory write");
    for r in &report.tile_results {
        let (m2, ft2, n) = r.estimate.map_or((0.0, 0.0, 0), |e| (e.area_m2, e.area_ft2, e.panel_count));
        w.write_record([
            r.tile.tile_id.clone(),
            r.tile.center.lat_deg.to_string(),
            r.tile.center.lon_deg.to_string(),
            r.classifier_score.to_string(),
            m2.to_string(),
            ft2.to_string(),
            n.to_string(),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Write `run.json`, `results.geojson`, `tiles.csv` and `masks/*.png` into
/// `dir`. Returns the report with `mask_path` filled in.
pub fn write_bundle(dir: &Path, report: &RegionReport, config: &Value) -> Result<RegionReport, StoreError> {
    let masks = dir.join("masks");
    fs::create_dir_all(&masks).map_err(|source| StoreError::Io { path: masks.clone(), source })?;
    let mut report = report.clone();
    for r in report.tile_results.iter_mut().filter(|r| r.classified_solar) {
        if !is_safe_tile_id(&r.tile.tile_id) {
            return Err(StoreError::Format(format!("tile id {:?} is not file-name safe", r.tile.tile_id)));
        }
        let Some(mask) = &r.mask else { continue };
        let rel = mask_file(&r.tile.tile_id);
        write(dir.join(&rel), &encode_mask_png(mask))?;
        r.mask_path = Some(rel);
    }
    write(dir.join(GEOJSON_FILE), &geojson_bytes(&report))?;
    write(dir.join(TILES_FILE), &tiles_csv(&report))?;
    let run = RunFile { config: config.clone(), report };
    let mut bytes = serde_json::to_vec_pretty(&run).map_err(|e| StoreError::Format(e.to_string()))?;
    bytes.push(b'\n');
    write(dir.join(RUN_FILE), &bytes)?;
    Ok(run.report)
}

/// Load a bundle and check that the GeoJSON totals agree with `run.json`.
pub fn read_bundle(dir: &Path) -> Result<Bundle, StoreError> {
    let run: RunFile = serde_json::from_slice(&read(dir.join(RUN_FILE))?)
        .map_err(|e| StoreError::Format(format!("{RUN_FILE}: {e}")))?;
    let mut report = run.report;
    for r in &mut report.tile_results {
        if let Some(rel) = &r.mask_path {
            let name = rel.strip_prefix("masks/").and_then(|n| n.strip_suffix(".png"));
            if !name.is_some_and(is_safe_tile_id) {
                return Err(StoreError::Format(format!("bad mask path {rel:?}")));
            }
            r.mask = Some(decode_mask_png(&read(dir.join(rel))?)?);
        }
    }
    let geo: Value = serde_json::from_slice(&read(dir.join(GEOJSON_FILE))?)
        .map_err(|e| StoreError::Format(format!("{GEOJSON_FILE}: {e}")))?;
    let totals: Totals = serde_json::from_value(geo["totals"].clone())
        .map_err(|e| StoreError::Format(format!("{GEOJSON_FILE} totals: {e}")))?;
    if totals != report.totals {
        return Err(StoreError::Format(format!("{GEOJSON_FILE} totals disagree with {RUN_FILE}")));
    }
    Ok(Bundle { dir: dir.to_path_buf(), config: run.config, report })
}
