use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "panelmap", version, about = "Map rooftop solar panels from aerial imagery")]
pub struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the tile cover of a region as CSV.
    Tiles(TilesArgs),
    /// Fetch, classify and segment every tile of a region.
    Analyze(AnalyzeArgs),
    /// Score the pipeline against a labelled manifest.
    Eval(EvalArgs),
    /// Run the HTTP job service.
    Serve(ServeArgs),
    /// Download a region's imagery into the tile cache.
    Fetch(FetchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RegionArgs {
    /// GeoJSON file with a Polygon or MultiPolygon.
    #[arg(long, value_name = "PATH")]
    pub region: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=22))]
    pub zoom: Option<u8>,
    /// Tile size in pixels [default: 600x600].
    #[arg(long, value_name = "WxH", value_parser = parse_tile_size)]
    pub tile_size: Option<(u32, u32)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderArg {
    Remote,
    Dir,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Remote,
    Stub,
}

#[derive(Debug, Clone, Args)]
pub struct ImageryArgs {
    #[arg(long)]
    pub provider: Option<ProviderArg>,
    /// Corpus root for `--provider dir`.
    #[arg(long, value_name = "PATH")]
    pub imagery_dir: Option<PathBuf>,
    /// Static-map URL template for `--provider remote`.
    #[arg(long, value_name = "URL")]
    pub url_template: Option<String>,
    #[arg(long, value_name = "PATH")]
    pub cache_dir: Option<PathBuf>,
    /// Seed for synthetic imagery noise.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct BackendArgs {
    #[arg(long)]
    pub backend: Option<BackendArg>,
    /// Model server base URL for `--backend remote`.
    #[arg(long, value_name = "URL")]
    pub model_server: Option<String>,
    /// Worker threads for tile analysis.
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
    pub parallel: Option<u16>,
}

#[derive(Debug, Args)]
pub struct TilesArgs {
    #[command(flatten)]
    pub region: RegionArgs,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub region: RegionArgs,
    #[command(flatten)]
    pub imagery: ImageryArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
    /// Run directory to write.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// JSON-lines manifest.
    #[arg(long, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub backend: BackendArgs,
    /// Directory for the report files.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Also write a stratified train/validation split at this ratio.
    #[arg(long, value_name = "RATIO")]
    pub split: Option<f64>,
    /// Seed for the split shuffle.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Directory holding one bundle per job.
    #[arg(long, value_name = "DIR")]
    pub runs_dir: Option<PathBuf>,
    #[command(flatten)]
    pub imagery: ImageryArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Args)]
pub struct FetchArgs {
    #[command(flatten)]
    pub region: RegionArgs,
    #[command(flatten)]
    pub imagery: ImageryArgs,
    /// Concurrent downloads.
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
    pub parallel: Option<u16>,
}

pub fn parse_tile_size(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let w: u32 = w.trim().parse().map_err(|_| format!("bad width in {s:?}"))?;
    let h: u32 = h.trim().parse().map_err(|_| format!("bad height in {s:?}"))?;
    if !(1..=panelmap::geo::MAX_TILE_PX).contains(&w) || !(1..=panelmap::geo::MAX_TILE_PX).contains(&h) {
        return Err(format!("tile size {w}x{h} outside 1-{}", panelmap::geo::MAX_TILE_PX));
    }
    Ok((w, h))
}
