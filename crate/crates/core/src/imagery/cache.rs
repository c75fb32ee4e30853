use std::collections::HashMap;
use std::fs;
use std::io::{self, ErrorKind};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use tracing::warn;

use super::directory::tile_path;
use super::{ImageTile, ImageryError, ImageryProvider, ProviderKind};
use crate::geo::TileRef;

/// PNG tile cache laid out as `{dir}/{zoom}/{tile_id}.png`.
///
/// One cache directory serves one provider configuration. Entries whose
/// dimensions do not match the requested tile are treated as corrupt.
pub struct TileCache {
    dir: PathBuf,
    inflight: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl TileCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into(), inflight: Mutex::new(HashMap::new()) }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, t: &TileRef) -> PathBuf {
        tile_path(&self.dir, t)
    }

    fn key_lock(&self, t: &TileRef) -> Arc<Mutex<()>> {
        let key = format!("{}/{}x{}", t.tile_id, t.width_px, t.height_px);
        let mut map = self.inflight.lock().unwrap_or_else(|e| e.into_inner());
        map.entry(key).or_default().clone()
    }

    /// Returns the cached tile or fetches and stores it.
    ///
    /// Concurrent callers for the same tile wait for the first one, so the
    /// provider sees at most one request per tile. A write failure is logged
    /// and the fetched tile is still returned.
    pub fn get_or_fetch(
        &self,
        provider: &dyn ImageryProvider,
        t: &TileRef,
    ) -> Result<ImageTile, ImageryError> {
        let lock = self.key_lock(t);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());

        if let Some(hit) = self.load(t, provider.kind()) {
            return Ok(hit);
        }
        let tile = provider.fetch(t)?;
        if let Err(e) = self.store(&tile) {
            warn!(tile = %t.tile_id, error = %e, "tile cache write failed");
        }
        Ok(tile)
    }

    pub fn load(&self, t: &TileRef, kind: ProviderKind) -> Option<ImageTile> {
        let path = self.path_for(t);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == ErrorKind::NotFound => return None,
            Err(e) => {
                warn!(path = %path.display(), error = %e, "tile cache read failed");
                return None;
            }
        };
        match ImageTile::decode(t.clone(), &bytes, kind) {
            Ok(tile) => Some(tile),
            Err(e) => {
                warn!(path = %path.display(), error = %e, "evicting unreadable cache entry");
                let _ = fs::remove_file(&path);
                None
            }
        }
    }

    pub fn store(&self, tile: &ImageTile) -> io::Result<()> {
        let path = self.path_for(tile.tile());
        let parent = path.parent().expect("cache paths have a zoom directory");
        fs::create_dir_all(parent)?;
        let tmp = parent.join(format!(".{}.{}.tmp", tile.tile().tile_id, std::process::id()));
        fs::write(&tmp, tile.encode_png())?;
        fs::rename(&tmp, &path)
    }
}

/// A provider whose fetches go through a [`TileCache`].
pub struct CachedProvider {
    inner: Box<dyn ImageryProvider>,
    cache: TileCache,
}

impl CachedProvider {
    pub fn new(inner: Box<dyn ImageryProvider>, cache: TileCache) -> Self {
        Self { inner, cache }
    }

    pub fn cache(&self) -> &TileCache {
        &self.cache
    }
}

impl ImageryProvider for CachedProvider {
    fn kind(&self) -> ProviderKind {
        self.inner.kind()
    }

    fn fetch(&self, tile: &TileRef) -> Result<ImageTile, ImageryError> {
        self.cache.get_or_fetch(self.inner.as_ref(), tile)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::thread;
    use std::time::Duration;

    use super::*;
    use crate::geo::LatLon;
    use crate::imagery::{SyntheticProvider, SyntheticSpec};

    struct Counting {
        inner: SyntheticProvider,
        calls: AtomicUsize,
        delay: Duration,
    }

    impl Counting {
        fn new(delay: Duration) -> Self {
            let spec = SyntheticSpec { jitter: 20, seed: 7, ..Default::default() };
            Self { inner: SyntheticProvider::new(spec), calls: AtomicUsize::new(0), delay }
        }
    }

    impl ImageryProvider for Counting {
        fn kind(&self) -> ProviderKind {
            ProviderKind::Remote
        }
        fn fetch(&self, tile: &TileRef) -> Result<ImageTile, ImageryError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            thread::sleep(self.delay);
            self.inner.fetch(tile)
        }
    }

    fn tile() -> TileRef {
        TileRef::new(LatLon::new(37.87, -122.27).unwrap(), 21, 64, 48).unwrap()
    }

    #[test]
    fn second_call_is_served_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let cache = TileCache::new(dir.path());
        let p = Counting::new(Duration::ZERO);
        let a = cache.get_or_fetch(&p, &tile()).unwrap();
        let b = cache.get_or_fetch(&p, &tile()).unwrap();
        assert_eq!(p.calls.load(Ordering::SeqCst), 1);
        assert_eq!(a.pixels(), b.pixels());
        assert!(dir.path().join("21").join(format!("{}.png", tile().tile_id)).exists());
    }

    #[test]
    fn concurrent_callers_share_one_fetch() {
        let dir = tempfile::tempdir().unwrap();
        let cache = TileCache::new(dir.path());
        let p = Counting::new(Duration::from_millis(50));
        let results: Vec<ImageTile> = thread::scope(|s| {
            let handles: Vec<_> = (0..16).map(|_| s.spawn(|| cache.get_or_fetch(&p, &tile()).unwrap())).collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        assert_eq!(p.calls.load(Ordering::SeqCst), 1);
        assert!(results.iter().all(|r| r.pixels() == results[0].pixels()));
    }

    #[test]
    fn corrupt_entry_is_evicted_and_refetched() {
        let dir = tempfile::tempdir().unwrap();
        let cache = TileCache::new(dir.path());
        let p = Counting::new(Duration::ZERO);
        let path = cache.path_for(&tile());
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, b"not a png").unwrap();
        let got = cache.get_or_fetch(&p, &tile()).unwrap();
        assert_eq!(p.calls.load(Ordering::SeqCst), 1);
        assert_eq!(cache.load(&tile(), ProviderKind::Remote).unwrap().pixels(), got.pixels());
    }

    #[test]
    fn unwritable_cache_still_returns_the_tile() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, b"x").unwrap();
        let cache = TileCache::new(&blocker);
        let p = Counting::new(Duration::ZERO);
        assert!(cache.get_or_fetch(&p, &tile()).is_ok());
        assert!(cache.get_or_fetch(&p, &tile()).is_ok());
        assert_eq!(p.calls.load(Ordering::SeqCst), 2);
    }
}
