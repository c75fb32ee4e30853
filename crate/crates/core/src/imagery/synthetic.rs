use std::collections::{BTreeSet, HashMap};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ImageTile, ImageryError, ImageryProvider, ProviderKind};
use crate::geo::TileRef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl PixelRect {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }
}

/// Which tiles a synthetic panel is painted on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TileSelector {
    All,
    Ids(BTreeSet<String>),
    /// Positions in the region cover the provider was bound to.
    Indices(BTreeSet<usize>),
}

impl TileSelector {
    fn matches(&self, tile_id: &str, index: Option<usize>) -> bool {
        match self {
            TileSelector::All => true,
            TileSelector::Ids(ids) => ids.contains(tile_id),
            TileSelector::Indices(ix) => index.is_some_and(|i| ix.contains(&i)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPanel {
    pub tiles: TileSelector,
    pub rect: PixelRect,
    pub fill: [u8; 3],
}

/// Recipe for generated imagery: flat background, optional seeded noise,
/// and rectangles painted on selected tiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub panels: Vec<SyntheticPanel>,
    pub background: [u8; 3],
    pub seed: u64,
    /// Per-channel amplitude of background noise, 0 for a flat background.
    pub jitter: u8,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            panels: Vec::new(),
            background: [120, 140, 90],
            seed: 0,
            jitter: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn render(&self, tile: &TileRef, index: Option<usize>) -> Result<RgbImage, ImageryError> {
        let (w, h) = (tile.width_px, tile.height_px);
        let mut img = RgbImage::from_pixel(w, h, Rgb(self.background));
        if self.jitter > 0 {
            let mut rng = ChaCha8Rng::from_seed(self.tile_seed(&tile.tile_id));
            let j = i16::from(self.jitter);
            for px in img.pixels_mut() {
                for ch in px.0.iter_mut() {
                    let v = i16::from(*ch) + rng.gen_range(-j..=j);
                    *ch = v.clamp(0, 255) as u8;
                }
            }
        }
        for panel in self.panels.iter().filter(|p| p.tiles.matches(&tile.tile_id, index)) {
            let r = panel.rect;
            if r.x + r.w > w || r.y + r.h > h {
                return Err(ImageryError::Config(format!(
                    "panel rect {r:?} exceeds {w}x{h} tile {}",
                    tile.tile_id
                )));
            }
            for y in r.y..r.y + r.h {
                for x in r.x..r.x + r.w {
                    img.put_pixel(x, y, Rgb(panel.fill));
                }
            }
        }
        Ok(img)
    }

    fn tile_seed(&self, tile_id: &str) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(tile_id.as_bytes());
        h.finalize().into()
    }
}

pub struct SyntheticProvider {
    spec: SyntheticSpec,
    positions: HashMap<String, usize>,
}

impl SyntheticProvider {
    pub fn new(spec: SyntheticSpec) -> Self {
        Self { spec, positions: HashMap::new() }
    }

    /// Binds cover positions so [`TileSelector::Indices`] can resolve.
    pub fn with_cover(mut self, cover: &[TileRef]) -> Self {
        self.positions = cover
            .iter()
            .enumerate()
            .map(|(i, t)| (t.tile_id.clone(), i))
            .collect();
        self
    }

    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }
}

impl ImageryProvider for SyntheticProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Synthetic
    }

    fn fetch(&self, tile: &TileRef) -> Result<ImageTile, ImageryError> {
        let index = self.positions.get(&tile.tile_id).copied();
        let img = self.spec.render(tile, index)?;
        ImageTile::new(tile.clone(), img, ProviderKind::Synthetic)
    }
}
