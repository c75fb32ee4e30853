use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::run_ordered;
use super::{analyze_tile, PipelineConfig, PipelineError, TileResult, SQ_FT_PER_SQ_M};
use crate::geo::{cover_polygons, GeoPolygon, TileRef, DEFAULT_TILE_CAP, MERCATOR_CONSTANT};
use crate::imagery::ImageryProvider;
use crate::inference::InferenceBackend;

/// What to analyse: polygons plus the tiling parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub polygons: Vec<GeoPolygon>,
    pub zoom: u8,
    pub tile_w: u32,
    pub tile_h: u32,
    #[serde(default = "default_cap")]
    pub tile_cap: usize,
}

fn default_cap() -> usize {
    DEFAULT_TILE_CAP
}

impl RegionSpec {
    pub fn new(polygons: Vec<GeoPolygon>, zoom: u8, tile_w: u32, tile_h: u32) -> Self {
        Self { polygons, zoom, tile_w, tile_h, tile_cap: DEFAULT_TILE_CAP }
    }

    pub fn cover(&self) -> Result<Vec<TileRef>, crate::geo::GeoError> {
        cover_polygons(&self.polygons, self.zoom, self.tile_w, self.tile_h, self.tile_cap)
    }

    /// Short content hash of the geometry and tiling parameters.
    pub fn region_id(&self) -> String {
        let doc = serde_json::to_vec(&(&self.polygons, self.zoom, self.tile_w, self.tile_h))
            .expect("region serializes");
        short_hash(&doc)
    }
}

fn short_hash(bytes: &[u8]) -> String {
    Sha256::digest(bytes)[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileFailure {
    pub index: usize,
    pub tile_id: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Totals {
    pub tiles: u64,
    pub solar_tiles: u64,
    pub panel_pixels: u64,
    pub area_m2: f64,
    pub area_ft2: f64,
    pub panel_count: u64,
}

impl Totals {
    /// Sums in slice order, so float totals are reproducible.
    pub fn sum(results: &[TileResult]) -> Self {
        let mut t = Totals::default();
        for r in results {
            t.tiles += 1;
            if let Some(e) = &r.estimate {
                t.solar_tiles += 1;
                t.panel_pixels += e.panel_pixel_count;
                t.area_m2 += e.area_m2;
                t.area_ft2 += e.area_ft2;
                t.panel_count += e.panel_count;
            }
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub started_at: Option<String>,
    pub finished_at: Option<String>,
}

/// Per-tile results and their totals, in the cover's row-major order.
/// Failed tiles are listed in `errors` and excluded from `totals`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub region_id: String,
    pub zoom: u8,
    pub tile_w: u32,
    pub tile_h: u32,
    pub tile_results: Vec<TileResult>,
    pub errors: Vec<TileFailure>,
    pub totals: Totals,
    pub provenance: Provenance,
}

impl RegionReport {
    pub fn new(
        region_id: String,
        zoom: u8,
        tile_w: u32,
        tile_h: u32,
        tile_results: Vec<TileResult>,
        errors: Vec<TileFailure>,
        cfg: &PipelineConfig,
    ) -> Self {
        let totals = Totals::sum(&tile_results);
        Self {
            region_id,
            zoom,
            tile_w,
            tile_h,
            tile_results,
            errors,
            totals,
            provenance: Provenance { config_hash: config_hash(cfg), ..Default::default() },
        }
    }

    pub fn is_clean(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn solar_tiles(&self) -> impl Iterator<Item = &TileResult> {
        self.tile_results.iter().filter(|r| r.classified_solar)
    }
}

/// Hash of every setting that changes results; worker count is excluded.
pub fn config_hash(cfg: &PipelineConfig) -> String {
    let doc = serde_json::json!({
        "classifier_threshold": cfg.classifier_threshold,
        "mask_threshold": cfg.mask_threshold,
        "panel_area_ft2": cfg.panel_area_ft2,
        "m2_to_ft2": SQ_FT_PER_SQ_M,
        "mercator_constant": MERCATOR_CONSTANT,
    });
    short_hash(doc.to_string().as_bytes())
}

/// Cover the region, then fetch and analyse every tile.
pub fn analyze_region(
    spec: &RegionSpec,
    provider: &dyn ImageryProvider,
    backend: &dyn InferenceBackend,
    cfg: &PipelineConfig,
) -> Result<RegionReport, PipelineError> {
    let tiles = spec.cover()?;
    analyze_tiles(spec, &tiles, provider, backend, cfg, &mut |_, _| {})
}

/// Analyse an already computed cover with up to `cfg.max_parallel_tiles`
/// workers. `progress(done, total)` runs on the calling thread after each tile.
pub fn analyze_tiles(
    spec: &RegionSpec,
    tiles: &[TileRef],
    provider: &dyn ImageryProvider,
    backend: &dyn InferenceBackend,
    cfg: &PipelineConfig,
    progress: &mut dyn FnMut(usize, usize),
) -> Result<RegionReport, PipelineError> {
    cfg.validate()?;
    let total = tiles.len();
    let outcomes = run_ordered(
        total,
        cfg.max_parallel_tiles,
        |i| {
            provider
                .fetch(&tiles[i])
                .map_err(Into::into)
                .and_then(|img| analyze_tile(&img, backend, cfg))
                .map_err(|e| e.to_string())
        },
        progress,
    );

    let mut results = Vec::with_capacity(total);
    let mut errors = Vec::new();
    for (i, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(r) => results.push(r),
            Err(message) => errors.push(TileFailure { index: i, tile_id: tiles[i].tile_id.clone(), message }),
        }
    }
    Ok(RegionReport::new(spec.region_id(), spec.zoom, spec.tile_w, spec.tile_h, results, errors, cfg))
}
