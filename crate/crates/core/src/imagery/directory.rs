use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use super::{ImageTile, ImageryError, ImageryProvider, ProviderKind};
use crate::geo::TileRef;

/// Reads tiles from a `{root}/{zoom}/{tile_id}.png` tree, the same layout
/// the tile cache writes.
pub struct DirectoryProvider {
    root: PathBuf,
}

impl DirectoryProvider {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path_for(&self, t: &TileRef) -> PathBuf {
        tile_path(&self.root, t)
    }
}

pub(crate) fn tile_path(root: &Path, t: &TileRef) -> PathBuf {
    root.join(t.zoom.to_string()).join(format!("{}.png", t.tile_id))
}

impl ImageryProvider for DirectoryProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Directory
    }

    fn fetch(&self, tile: &TileRef) -> Result<ImageTile, ImageryError> {
        let path = self.path_for(tile);
        let bytes = fs::read(&path).map_err(|e| match e.kind() {
            ErrorKind::NotFound => ImageryError::NotFound(tile.tile_id.clone()),
            _ => ImageryError::Storage(e),
        })?;
        ImageTile::decode(tile.clone(), &bytes, ProviderKind::Directory)
    }
}
