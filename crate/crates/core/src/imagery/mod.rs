//! Tile imagery: providers and the on-disk tile cache.

mod cache;
mod directory;
mod remote;
mod synthetic;

use std::io::Cursor;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use image::{ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::TileRef;
use crate::http::UreqTransport;

pub use cache::{CachedProvider, TileCache};
pub use directory::DirectoryProvider;
pub use remote::RemoteProvider;
pub use synthetic::{PixelRect, SyntheticPanel, SyntheticProvider, SyntheticSpec, TileSelector};

pub const DEFAULT_API_KEY_ENV: &str = "MAPS_API_KEY";

#[derive(Debug, Error)]
pub enum ImageryError {
    #[error("provider configuration: {0}")]
    Config(String),
    #[error("transport failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("bad payload for {tile_id}: {message}")]
    Payload { tile_id: String, message: String },
    #[error("tile {0} not found")]
    NotFound(String),
    #[error("cache storage: {0}")]
    Storage(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Remote,
    Directory,
    Synthetic,
}

impl ProviderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProviderKind::Remote => "remote",
            ProviderKind::Directory => "directory",
            ProviderKind::Synthetic => "synthetic",
        }
    }
}

/// Decoded RGB imagery for one tile. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTile {
    tile: TileRef,
    pixels: Arc<RgbImage>,
    source: ProviderKind,
}

impl ImageTile {
    pub fn new(tile: TileRef, pixels: RgbImage, source: ProviderKind) -> Result<Self, ImageryError> {
        if pixels.dimensions() != (tile.width_px, tile.height_px) {
            return Err(ImageryError::Payload {
                tile_id: tile.tile_id.clone(),
                message: format!(
                    "image is {}x{}, tile wants {}x{}",
                    pixels.width(),
                    pixels.height(),
                    tile.width_px,
                    tile.height_px
                ),
            });
        }
        Ok(Self { tile, pixels: Arc::new(pixels), source })
    }

    /// Decodes any supported raster format into a tile.
    pub fn decode(tile: TileRef, bytes: &[u8], source: ProviderKind) -> Result<Self, ImageryError> {
        let img = image::load_from_memory(bytes).map_err(|e| ImageryError::Payload {
            tile_id: tile.tile_id.clone(),
            message: e.to_string(),
        })?;
        Self::new(tile, img.to_rgb8(), source)
    }

    pub fn tile(&self) -> &TileRef {
        &self.tile
    }

    pub fn pixels(&self) -> &RgbImage {
        &self.pixels
    }

    pub fn source(&self) -> ProviderKind {
        self.source
    }

    pub fn width(&self) -> u32 {
        self.pixels.width()
    }

    pub fn height(&self) -> u32 {
        self.pixels.height()
    }

    pub fn encode_png(&self) -> Vec<u8> {
        let mut out = Cursor::new(Vec::new());
        self.pixels
            .write_to(&mut out, ImageFormat::Png)
            .expect("in-memory PNG encoding of an RGB8 buffer");
        out.into_inner()
    }
}

pub trait ImageryProvider: Send + Sync {
    fn kind(&self) -> ProviderKind;
    fn fetch(&self, tile: &TileRef) -> Result<ImageTile, ImageryError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    /// URL with `{lat}`, `{lon}`, `{zoom}`, `{w}`, `{h}` and `{key}` placeholders.
    pub base_url_template: Option<String>,
    pub api_key_env: String,
    /// Root of a `{zoom}/{tile_id}.png` corpus for the directory provider.
    pub directory: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub synthetic: Option<SyntheticSpec>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Synthetic,
            base_url_template: None,
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
            directory: None,
            cache_dir: None,
            timeout_ms: 10_000,
            max_retries: 3,
            backoff_ms: 250,
            synthetic: None,
        }
    }
}

impl ProviderConfig {
    /// Builds the configured provider, wrapped in a tile cache when `cache_dir` is set.
    ///
    /// `cover` lets a synthetic spec address tiles by their position in a region cover.
    pub fn build(&self, cover: &[TileRef]) -> Result<Box<dyn ImageryProvider>, ImageryError> {
        let inner: Box<dyn ImageryProvider> = match self.kind {
            ProviderKind::Remote => {
                let template = self.base_url_template.clone().ok_or_else(|| {
                    ImageryError::Config("remote provider needs base_url_template".into())
                })?;
                let key = std::env::var(&self.api_key_env).map_err(|_| {
                    ImageryError::Config(format!("environment variable {} is not set", self.api_key_env))
                })?;
                let transport = UreqTransport::new(Duration::from_millis(self.timeout_ms));
                Box::new(
                    RemoteProvider::new(template, key, Arc::new(transport))
                        .with_retries(self.max_retries, Duration::from_millis(self.backoff_ms)),
                )
            }
            ProviderKind::Directory => {
                let root = self.directory.clone().ok_or_else(|| {
                    ImageryError::Config("directory provider needs a directory".into())
                })?;
                Box::new(DirectoryProvider::new(root))
            }
            ProviderKind::Synthetic => {
                let spec = self.synthetic.clone().unwrap_or_default();
                Box::new(SyntheticProvider::new(spec).with_cover(cover))
            }
        };
        Ok(match &self.cache_dir {
            Some(dir) => Box::new(CachedProvider::new(inner, TileCache::new(dir))),
            None => inner,
        })
    }
}

/// One-shot fetch through the provider described by `cfg`.
pub fn fetch_tile(cfg: &ProviderConfig, tile: &TileRef) -> Result<ImageTile, ImageryError> {
    cfg.build(std::slice::from_ref(tile))?.fetch(tile)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::LatLon;

    #[test]
    fn dimension_mismatch_is_a_payload_error() {
        let t = TileRef::new(LatLon::new(1.0, 1.0).unwrap(), 20, 8, 8).unwrap();
        let err = ImageTile::new(t, RgbImage::new(4, 8), ProviderKind::Synthetic).unwrap_err();
        assert!(matches!(err, ImageryError::Payload { .. }));
    }

    #[test]
    fn png_round_trip_is_exact() {
        let t = TileRef::new(LatLon::new(1.0, 1.0).unwrap(), 20, 7, 5).unwrap();
        let img = RgbImage::from_fn(7, 5, |x, y| image::Rgb([x as u8 * 30, y as u8 * 40, 9]));
        let tile = ImageTile::new(t.clone(), img, ProviderKind::Directory).unwrap();
        let back = ImageTile::decode(t, &tile.encode_png(), ProviderKind::Directory).unwrap();
        assert_eq!(back.pixels(), tile.pixels());
    }

    #[test]
    fn garbage_bytes_are_a_payload_error() {
        let t = TileRef::new(LatLon::new(1.0, 1.0).unwrap(), 20, 7, 5).unwrap();
        let err = ImageTile::decode(t, b"<html>quota exceeded</html>", ProviderKind::Remote).unwrap_err();
        assert!(matches!(err, ImageryError::Payload { .. }));
    }

    #[test]
    fn remote_without_key_is_a_config_error() {
        let cfg = ProviderConfig {
            kind: ProviderKind::Remote,
            base_url_template: Some("http://127.0.0.1:9/{lat},{lon}".into()),
            api_key_env: "PANELMAP_TEST_UNSET_KEY_VARIABLE".into(),
            ..Default::default()
        };
        let t = TileRef::new(LatLon::new(1.0, 1.0).unwrap(), 20, 8, 8).unwrap();
        assert!(matches!(fetch_tile(&cfg, &t), Err(ImageryError::Config(_))));
    }
}
