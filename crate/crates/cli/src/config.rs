use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use panelmap::geo::{parse_region, GeoPolygon, MAX_ZOOM};
use panelmap::{BackendConfig, BackendKind, PipelineConfig, ProviderConfig, ProviderKind, RegionSpec};
use serde::Deserialize;

use crate::args::{parse_tile_size, BackendArg, BackendArgs, ImageryArgs, ProviderArg, RegionArgs};
use crate::UsageError;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSection {
    pub runs_dir: Option<PathBuf>,
    pub cors_origin: Option<String>,
    pub max_running_jobs: Option<usize>,
    pub tile_cap: Option<usize>,
}

/// Contents of `--config`. Every field is optional; flags win.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub region: Option<PathBuf>,
    pub zoom: Option<u8>,
    pub tile_size: Option<String>,
    pub out: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub port: Option<u16>,
    pub seed: Option<u64>,
    pub split: Option<f64>,
    pub provider: ProviderConfig,
    pub backend: BackendConfig,
    pub pipeline: PipelineConfig,
    pub service: ServiceSection,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;
        if let Some(z) = cfg.zoom.filter(|&z| z > MAX_ZOOM) {
            return Err(UsageError(format!("config zoom {z} outside 0-{MAX_ZOOM}")).into());
        }
        Ok(cfg)
    }
}

pub fn required<T>(flag: Option<T>, file: Option<T>, name: &str) -> Result<T, UsageError> {
    flag.or(file).ok_or_else(|| UsageError(format!("missing required option --{name} (or \"{name}\" in --config)")))
}

pub fn region_spec(args: &RegionArgs, cfg: &FileConfig) -> anyhow::Result<RegionSpec> {
    let path = required(args.region.clone(), cfg.region.clone(), "region")?;
    let zoom = required(args.zoom, cfg.zoom, "zoom")?;
    let (w, h) = match (args.tile_size, &cfg.tile_size) {
        (Some(t), _) => t,
        (None, Some(s)) => parse_tile_size(s).map_err(|e| UsageError(format!("config tile_size: {e}")))?,
        (None, None) => (600, 600),
    };
    let mut spec = RegionSpec::new(load_region(&path)?, zoom, w, h);
    if let Some(cap) = cfg.service.tile_cap {
        spec.tile_cap = cap;
    }
    Ok(spec)
}

pub fn load_region(path: &Path) -> anyhow::Result<Vec<GeoPolygon>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading region {}", path.display()))?;
    parse_region(&text).with_context(|| format!("region {}", path.display()))
}

pub fn provider(args: &ImageryArgs, cfg: &FileConfig) -> ProviderConfig {
    let mut p = cfg.provider.clone();
    if let Some(kind) = args.provider {
        p.kind = match kind {
            ProviderArg::Remote => ProviderKind::Remote,
            ProviderArg::Dir => ProviderKind::Directory,
            ProviderArg::Synthetic => ProviderKind::Synthetic,
        };
    }
    if let Some(d) = &args.imagery_dir {
        p.directory = Some(d.clone());
    }
    if let Some(t) = &args.url_template {
        p.base_url_template = Some(t.clone());
    }
    if let Some(c) = &args.cache_dir {
        p.cache_dir = Some(c.clone());
    }
    if let Some(seed) = args.seed.or(cfg.seed) {
        p.synthetic.get_or_insert_with(Default::default).seed = seed;
    }
    p
}

pub fn backend(args: &BackendArgs, cfg: &FileConfig) -> (BackendConfig, PipelineConfig) {
    let mut b = cfg.backend.clone();
    if let Some(kind) = args.backend {
        b.kind = match kind {
            BackendArg::Remote => BackendKind::Remote,
            BackendArg::Stub => BackendKind::Stub,
        };
    }
    if let Some(url) = &args.model_server {
        b.endpoint_url = Some(url.clone());
    }
    let mut p = cfg.pipeline.clone();
    if let Some(n) = args.parallel {
        p.max_parallel_tiles = usize::from(n);
    }
    (b, p)
}
