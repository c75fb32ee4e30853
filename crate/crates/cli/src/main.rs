mod args;
mod config;

use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context};
use clap::Parser;
use panelmap::eval::{evaluate_dataset, split_manifest, Manifest};
use panelmap::pipeline::{analyze_tiles, run_ordered};
use panelmap::store::write_bundle;
use serde_json::json;

use args::{AnalyzeArgs, Cli, Command, EvalArgs, FetchArgs, ServeArgs, TilesArgs};
use config::{FileConfig, ServiceSection};

/// Bad or missing options; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let cfg = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Tiles(a) => tiles(a, &cfg),
        Command::Analyze(a) => analyze(a, &cfg),
        Command::Eval(a) => eval(a, &cfg),
        Command::Serve(a) => serve(a, &cfg),
        Command::Fetch(a) => fetch(a, &cfg),
    }
}

fn status(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn tiles(a: TilesArgs, cfg: &FileConfig) -> anyhow::Result<ExitCode> {
    let spec = config::region_spec(&a.region, cfg)?;
    let tiles = spec.cover()?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "index,tile_id,lat,lon,zoom,width,height")?;
    for (i, t) in tiles.iter().enumerate() {
        writeln!(
            out,
            "{i},{},{},{},{},{},{}",
            t.tile_id, t.center.lat_deg, t.center.lon_deg, t.zoom, t.width_px, t.height_px
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

/// Fixed timestamp from `SOURCE_DATE_EPOCH`, if set. Without it bundles carry
/// no timestamps, so identical inputs give identical files.
fn build_time() -> anyhow::Result<Option<String>> {
    let Ok(v) = std::env::var("SOURCE_DATE_EPOCH") else { return Ok(None) };
    let secs: u64 = v.trim().parse().map_err(|_| UsageError(format!("SOURCE_DATE_EPOCH {v:?} is not an integer")))?;
    let t = UNIX_EPOCH + Duration::from_secs(secs);
    Ok(Some(humantime::format_rfc3339_seconds(t).to_string()))
}

fn analyze(a: AnalyzeArgs, cfg: &FileConfig) -> anyhow::Result<ExitCode> {
    let out = config::required(a.out.clone(), cfg.out.clone(), "out")?;
    let spec = config::region_spec(&a.region, cfg)?;
    let provider_cfg = config::provider(&a.imagery, cfg);
    let (backend_cfg, pipeline) = config::backend(&a.backend, cfg);
    pipeline.validate()?;

    let tiles = spec.cover()?;
    let provider = provider_cfg.build(&tiles)?;
    let backend = backend_cfg.build()?;
    let mut report = analyze_tiles(&spec, &tiles, provider.as_ref(), backend.as_ref(), &pipeline, &mut |done, total| {
        tracing::debug!(done, total, "tile finished")
    })?;
    let stamp = build_time()?;
    report.provenance.started_at = stamp.clone();
    report.provenance.finished_at = stamp;

    let run_cfg = json!({
        "zoom": spec.zoom,
        "tile_w": spec.tile_w,
        "tile_h": spec.tile_h,
        "provider": provider_cfg,
        "backend": backend_cfg,
        "pipeline": pipeline,
    });
    write_bundle(&out, &report, &run_cfg).with_context(|| format!("writing {}", out.display()))?;

    let t = &report.totals;
    println!("tiles={} solar={} area_ft2={} panels={}", t.tiles, t.solar_tiles, t.area_ft2, t.panel_count);
    for e in &report.errors {
        eprintln!("tile {} failed: {}", e.tile_id, e.message);
    }
    Ok(status(report.errors.is_empty()))
}

fn eval(a: EvalArgs, cfg: &FileConfig) -> anyhow::Result<ExitCode> {
    let path = config::required(a.manifest.clone(), cfg.manifest.clone(), "manifest")?;
    let out = a.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("eval-report"));
    let (backend_cfg, pipeline) = config::backend(&a.backend, cfg);
    let manifest = Manifest::load(&path)?;
    let backend = backend_cfg.build()?;
    let report = evaluate_dataset(&manifest, backend.as_ref(), &pipeline)?;

    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("report.json"), serde_json::to_vec_pretty(&report)?)?;
    fs::write(out.join("report.txt"), report.text_table())?;
    fs::write(out.join("misclassified.csv"), report.misclassified_csv())?;

    if let Some(ratio) = a.split.or(cfg.split) {
        write_split(&manifest, ratio, a.seed.or(cfg.seed).unwrap_or(0), &out)?;
    }

    let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    println!(
        "entries={} accuracy={:.2} mean_iou={:.2} micro_iou={:.2} area_error_pct={} count_error_pct={} misclassified={} failed={}",
        report.entries,
        report.metrics.accuracy,
        report.masks.mean_iou,
        report.masks.micro_iou,
        pct(report.area.area_percent_error),
        pct(report.area.count_percent_error),
        report.misclassified.len(),
        report.failures.len(),
    );
    for f in &report.failures {
        eprintln!("entry {} failed: {}", f.entry, f.message);
    }
    Ok(status(report.failures.is_empty()))
}

fn write_split(m: &Manifest, ratio: f64, seed: u64, out: &Path) -> anyhow::Result<()> {
    let (train, val) = split_manifest(&m.entries, |e| e.label, ratio, seed).map_err(|e| UsageError(e.to_string()))?;
    // rewritten manifests live elsewhere, so paths are made absolute
    let root = fs::canonicalize(&m.root).unwrap_or_else(|_| m.root.clone());
    for (name, part) in [("train.jsonl", train), ("validation.jsonl", val)] {
        let mut entries = part;
        for e in &mut entries {
            e.image = root.join(&e.image);
            e.mask = e.mask.as_ref().map(|p| root.join(p));
        }
        fs::write(out.join(name), Manifest { root: root.clone(), entries }.to_jsonl())?;
    }
    Ok(())
}

fn serve(a: ServeArgs, cfg: &FileConfig) -> anyhow::Result<ExitCode> {
    let (backend, pipeline) = config::backend(&a.backend, cfg);
    let ServiceSection { runs_dir, cors_origin, max_running_jobs, tile_cap } = &cfg.service;
    let defaults = panelmap_service::ServiceConfig::default();
    let service_cfg = panelmap_service::ServiceConfig {
        runs_dir: a.runs_dir.clone().or_else(|| runs_dir.clone()).unwrap_or(defaults.runs_dir),
        provider: config::provider(&a.imagery, cfg),
        backend,
        pipeline,
        tile_cap: tile_cap.unwrap_or(defaults.tile_cap),
        max_running_jobs: max_running_jobs.unwrap_or(defaults.max_running_jobs),
        cors_origin: cors_origin.clone(),
        ..defaults
    };
    let port = a.port.or(cfg.port).unwrap_or(8080);
    let addr: SocketAddr = format!("{}:{port}", a.host).parse().map_err(|e| UsageError(format!("--host: {e}")))?;
    let state = panelmap_service::AppState::new(service_cfg)?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(panelmap_service::serve(state, addr))?;
    Ok(ExitCode::SUCCESS)
}

fn fetch(a: FetchArgs, cfg: &FileConfig) -> anyhow::Result<ExitCode> {
    let spec = config::region_spec(&a.region, cfg)?;
    let provider_cfg = config::provider(&a.imagery, cfg);
    if provider_cfg.cache_dir.is_none() {
        bail!(UsageError("fetch needs --cache-dir (or provider.cache_dir in --config)".into()));
    }
    let tiles = spec.cover()?;
    let provider = provider_cfg.build(&tiles)?;
    let width = a.parallel.map_or(cfg.pipeline.max_parallel_tiles, usize::from);
    let started = SystemTime::now();
    let results = run_ordered(tiles.len(), width, |i| provider.fetch(&tiles[i]), &mut |_, _| {});
    let mut failed = 0;
    for (t, r) in tiles.iter().zip(&results) {
        if let Err(e) = r {
            failed += 1;
            eprintln!("tile {} failed: {e}", t.tile_id);
        }
    }
    tracing::info!(elapsed = ?started.elapsed().unwrap_or_default(), "fetch finished");
    println!("tiles={} fetched={} failed={failed}", tiles.len(), tiles.len() - failed);
    Ok(status(failed == 0))
}
