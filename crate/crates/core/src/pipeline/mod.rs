//! Classify-then-segment flow for single tiles and whole regions, and the
//! conversion of predicted masks into panel area and panel counts.

mod mask;
mod pool;
mod region;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{meters_per_pixel, GeoError, TileRef};
use crate::imagery::{ImageTile, ImageryError};
use crate::inference::{BackendError, InferenceBackend};

pub use mask::{binarize, resize_mask, BinaryMask};
pub use pool::run_ordered;
pub use region::{
    analyze_region, analyze_tiles, config_hash, Provenance, RegionReport, RegionSpec, TileFailure, Totals,
};

/// Square feet per square metre.
pub const SQ_FT_PER_SQ_M: f64 = 10.7639104167;

/// Footprint of one standard PV module in square feet.
pub const STANDARD_PANEL_FT2: f64 = 17.6;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

/// Why a single tile could not be analysed.
#[derive(Debug, Error)]
pub enum TileError {
    #[error("imagery: {0}")]
    Imagery(#[from] ImageryError),
    #[error("inference: {0}")]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Scores at or above this are positive. Values above 1 disable segmentation.
    pub classifier_threshold: f64,
    /// Probabilities at or above this become mask ones.
    pub mask_threshold: f32,
    pub panel_area_ft2: f64,
    pub max_parallel_tiles: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            classifier_threshold: 0.5,
            mask_threshold: 0.5,
            panel_area_ft2: STANDARD_PANEL_FT2,
            max_parallel_tiles: 8,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.classifier_threshold > 0.0 && self.classifier_threshold.is_finite()) {
            return Err(PipelineError::Config(format!(
                "classifier_threshold {} must be positive",
                self.classifier_threshold
            )));
        }
        if !(self.mask_threshold > 0.0 && self.mask_threshold < 1.0) {
            return Err(PipelineError::Config(format!(
                "mask_threshold {} must be in (0, 1)",
                self.mask_threshold
            )));
        }
        if !(self.panel_area_ft2 > 0.0 && self.panel_area_ft2.is_finite()) {
            return Err(PipelineError::Config("panel_area_ft2 must be positive".into()));
        }
        if self.max_parallel_tiles == 0 {
            return Err(PipelineError::Config("max_parallel_tiles must be at least 1".into()));
        }
        Ok(())
    }
}

/// Physical reading of one tile's mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelEstimate {
    pub meters_per_pixel: f64,
    pub panel_pixel_count: u64,
    pub area_m2: f64,
    pub area_ft2: f64,
    pub panel_count: u64,
}

impl PanelEstimate {
    pub fn from_pixel_count(
        panel_pixel_count: u64,
        lat_deg: f64,
        zoom: u8,
        panel_area_ft2: f64,
    ) -> Result<Self, GeoError> {
        let mpp = meters_per_pixel(lat_deg, zoom)?;
        let area_m2 = panel_pixel_count as f64 * mpp * mpp;
        let area_ft2 = area_m2 * SQ_FT_PER_SQ_M;
        Ok(Self {
            meters_per_pixel: mpp,
            panel_pixel_count,
            area_m2,
            area_ft2,
            panel_count: round_half_up(area_ft2 / panel_area_ft2),
        })
    }
}

pub fn round_half_up(x: f64) -> u64 {
    (x + 0.5).floor() as u64
}

/// Area and panel count for a mask already at the tile's native resolution.
pub fn estimate_area(
    m: &BinaryMask,
    lat_deg: f64,
    zoom: u8,
    cfg: &PipelineConfig,
) -> Result<PanelEstimate, GeoError> {
    PanelEstimate::from_pixel_count(m.count_ones(), lat_deg, zoom, cfg.panel_area_ft2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileResult {
    pub tile: TileRef,
    pub classifier_score: f64,
    pub classified_solar: bool,
    pub estimate: Option<PanelEstimate>,
    /// Bundle-relative path of the stored mask, set when the mask is written.
    pub mask_path: Option<String>,
    #[serde(skip)]
    pub mask: Option<BinaryMask>,
}

/// Classify the tile and, for positives only, segment it and measure the mask.
pub fn analyze_tile(
    img: &ImageTile,
    backend: &dyn InferenceBackend,
    cfg: &PipelineConfig,
) -> Result<TileResult, TileError> {
    let tile = img.tile();
    let score = backend.classify(img)?.score();
    if score < cfg.classifier_threshold {
        return Ok(TileResult {
            tile: tile.clone(),
            classifier_score: score,
            classified_solar: false,
            estimate: None,
            mask_path: None,
            mask: None,
        });
    }
    let probs = backend.segment(img)?;
    let mask = binarize(&probs, cfg.mask_threshold).resize(tile.width_px, tile.height_px);
    let estimate = estimate_area(&mask, tile.center.lat_deg, tile.zoom, cfg)?;
    Ok(TileResult {
        tile: tile.clone(),
        classifier_score: score,
        classified_solar: true,
        estimate: Some(estimate),
        mask_path: None,
        mask: Some(mask),
    })
}
