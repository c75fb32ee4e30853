//! One PASS/FAIL line per acceptance criterion. Run with
//! `cargo test -p panelmap-cli --test acceptance`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use panelmap::eval::{class_metrics, mask_iou, percent_error, split_manifest, ConfusionMatrix, Label};
use panelmap::geo::{
    cover_region, latlon_to_world_pixel, meters_per_pixel, tile_footprint, world_pixel_to_latlon, world_size_px,
};
use panelmap::http::{Transport, UreqTransport};
use panelmap::imagery::{PixelRect, SyntheticPanel, SyntheticProvider, SyntheticSpec, TileSelector};
use panelmap::inference::StubBackend;
use panelmap::pipeline::{analyze_region, round_half_up, PanelEstimate, STANDARD_PANEL_FT2};
use panelmap::store::{decode_mask_png, encode_mask_png, export_geojson, geojson_bytes, read_bundle, write_bundle};
use panelmap::{
    BinaryMask, GeoPolygon, GeoRect, LatLon, PipelineConfig, ProviderConfig, RegionReport, RegionSpec, TileRef,
    TileResult, Totals,
};
use panelmap_service::{AppState, ServiceConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

const LAT: f64 = 37.8716;
const LON: f64 = -122.2727;

struct Criterion {
    name: &'static str,
    limit: Duration,
    run: fn() -> String,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { name: "meters-per-pixel oracle", limit: Duration::from_secs(1), run: mpp_oracle },
        Criterion { name: "percent error reproduction", limit: Duration::from_secs(1), run: percent_errors },
        Criterion { name: "stratified split arithmetic", limit: Duration::from_secs(1), run: split_arithmetic },
        Criterion { name: "confusion matrix metrics", limit: Duration::from_secs(1), run: confusion_metrics },
        Criterion { name: "panel counting rule", limit: Duration::from_secs(30), run: counting_rule },
        Criterion { name: "mask metric identities", limit: Duration::from_secs(10), run: metric_identities },
        Criterion { name: "projection properties", limit: Duration::from_secs(5), run: projection },
        Criterion { name: "tile cover oracle", limit: Duration::from_secs(30), run: cover_oracle },
        Criterion { name: "end-to-end synthetic region", limit: Duration::from_secs(10), run: end_to_end },
        Criterion { name: "persistence round trip", limit: Duration::from_secs(5), run: persistence },
        Criterion { name: "service lifecycle", limit: Duration::from_secs(15), run: service_lifecycle },
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run));
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if elapsed <= c.limit => (true, d),
            Ok(d) => (false, format!("{d}; too slow")),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panicked".into());
                (false, msg)
            }
        };
        failed += usize::from(!ok);
        println!(
            "{} {:<30} {:>8.1} ms (limit {} ms)  {detail}",
            if ok { "PASS" } else { "FAIL" },
            c.name,
            elapsed.as_secs_f64() * 1e3,
            c.limit.as_millis()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn mpp_oracle() -> String {
    let equator = meters_per_pixel(0.0, 0).unwrap();
    assert_eq!(equator, 156543.03392);
    let berkeley = meters_per_pixel(LAT, 21).unwrap();
    let expected = 0.05892432521410466;
    let rel = (berkeley - expected).abs() / expected;
    assert!(rel < 1e-9, "mpp(37.8716, 21) = {berkeley}, relative error {rel:e}");
    format!("mpp(0,0)={equator} mpp(37.8716,21)={berkeley:.12}")
}

fn percent_errors() -> String {
    let count = percent_error(5787.0, 5828.0).unwrap();
    let area = percent_error(101765.48, 102609.72).unwrap();
    assert!((count - 0.7085).abs() <= 1e-4, "count error {count}");
    assert!((area - 0.8296).abs() <= 1e-4, "area error {area}");
    format!("count={count:.4}% area={area:.4}%")
}

fn split_arithmetic() -> String {
    let labels: Vec<Label> = std::iter::repeat(Label::Solar)
        .take(836)
        .chain(std::iter::repeat(Label::NoSolar).take(1619))
        .collect();
    let (train, val) = split_manifest(&labels, |l| *l, 0.8, 7).unwrap();
    let n = |v: &[Label], l| v.iter().filter(|&&x| x == l).count();
    let got = [n(&train, Label::Solar), n(&val, Label::Solar), n(&train, Label::NoSolar), n(&val, Label::NoSolar)];
    assert_eq!(got, [668, 168, 1295, 324]);
    format!("solar {}/{} no_solar {}/{}", got[0], got[1], got[2], got[3])
}

fn confusion_metrics() -> String {
    let m = class_metrics(&ConfusionMatrix { tp: 292, fp: 64, fn_: 29, tn: 1858 });
    let r2 = |x: f64| (x * 100.0).round() / 100.0;
    let checks = [
        ("solar precision", m.solar.precision, 0.82),
        ("solar recall", m.solar.recall, 0.91),
        ("solar f1", m.solar.f1, 0.86),
        ("no_solar precision", m.no_solar.precision, 0.98),
        ("no_solar recall", m.no_solar.recall, 0.97),
        ("no_solar f1", m.no_solar.f1, 0.98),
        ("accuracy", m.accuracy, 0.96),
    ];
    for (name, got, want) in checks {
        assert!((r2(got) - want).abs() <= 0.005, "{name}: {got} rounds to {}, want {want}", r2(got));
    }
    format!("accuracy={:.4} solar f1={:.4}", m.accuracy, m.solar.f1)
}

fn counting_rule() -> String {
    let aggregate = 1_082_431.98 / STANDARD_PANEL_FT2;
    assert!((aggregate - 61_501.8).abs() < 0.05, "aggregate division {aggregate}");
    let reported = 61_480.0;
    let gap = (aggregate - reported).abs() / aggregate;
    assert!(gap < 5e-4, "reported count off by {:.4}%", gap * 100.0);

    // seeded 22k-tile regions, about one tile in eight carrying panels
    let cfg = PipelineConfig::default();
    let mut drifts: Vec<(f64, Totals)> = (0..21).map(|seed| synthetic_region_drift(seed, &cfg)).collect();
    drifts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (median, t) = drifts[drifts.len() / 2];
    let worst = drifts.last().unwrap().0;
    assert!(median < 5e-4, "median per-tile rounding drift {:.4}%", median * 100.0);
    assert_eq!(round_half_up(1.5), 2);
    format!(
        "61501.8 vs 61480 ({:.4}%); 22k-tile runs: median drift {:.4}% ({} per-tile vs {:.1} aggregate), worst {:.4}%",
        gap * 100.0,
        median * 100.0,
        t.panel_count,
        t.area_ft2 / STANDARD_PANEL_FT2,
        worst * 100.0
    )
}

/// Relative gap between summed per-tile counts and aggregate division.
fn synthetic_region_drift(seed: u64, cfg: &PipelineConfig) -> (f64, Totals) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x0, y0) = latlon_to_world_pixel(LatLon::new(LAT, LON).unwrap(), 21);
    let results: Vec<TileResult> = (0..22_000)
        .map(|i| {
            let (c, r) = (i % 200, i / 200);
            let tile = TileRef::from_world_center(x0 + 600.0 * c as f64, y0 + 600.0 * r as f64, 21, 600, 600).unwrap();
            let solar = rng.gen_ratio(1, 8);
            let estimate = solar.then(|| {
                let px = rng.gen_range(2_000..=19_000);
                PanelEstimate::from_pixel_count(px, LAT, 21, cfg.panel_area_ft2).unwrap()
            });
            TileResult {
                tile,
                classifier_score: if solar { 0.9 } else { 0.1 },
                classified_solar: solar,
                estimate,
                mask_path: None,
                mask: None,
            }
        })
        .collect();
    let t = RegionReport::new(format!("synthetic-{seed}"), 21, 600, 600, results, Vec::new(), cfg).totals;
    let by_division = t.area_ft2 / STANDARD_PANEL_FT2;
    ((t.panel_count as f64 - by_division).abs() / by_division, t)
}

fn random_mask(rng: &mut ChaCha8Rng) -> BinaryMask {
    let (w, h) = (rng.gen_range(1..48), rng.gen_range(1..48));
    let density: f64 = rng.gen();
    BinaryMask::from_fn(w, h, |_, _| rng.gen_bool(density))
}

fn metric_identities() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut equal_pairs = 0;
    for i in 0..1000 {
        let a = random_mask(&mut rng);
        let b = if i % 10 == 0 {
            equal_pairs += 1;
            a.clone()
        } else {
            let (w, h) = a.dimensions();
            let flip: f64 = rng.gen_range(0.0..0.3);
            BinaryMask::from_fn(w, h, |x, y| a.get(x, y) ^ rng.gen_bool(flip))
        };
        let ab = mask_iou(&a, &b).unwrap();
        let ba = mask_iou(&b, &a).unwrap();
        assert!((ab.dice - 2.0 * ab.iou / (1.0 + ab.iou)).abs() <= 1e-12, "dice identity, pair {i}");
        assert_eq!(ab.iou, ba.iou, "symmetry, pair {i}");
        if a.count_ones() > 0 || b.count_ones() > 0 {
            assert_eq!(ab.iou == 1.0, a == b, "iou=1 iff equal, pair {i}");
        }
    }
    format!("1000 pairs, {equal_pairs} identical")
}

fn projection() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let p = LatLon::new(rng.gen_range(-85.0..85.0), rng.gen_range(-180.0..180.0)).unwrap();
        let z = rng.gen_range(0..=22);
        let (x, y) = latlon_to_world_pixel(p, z);
        let q = world_pixel_to_latlon(x, y, z).unwrap();
        worst = worst.max((q.lat_deg - p.lat_deg).abs()).max((q.lon_deg - p.lon_deg).abs());
        if z < 22 {
            assert_eq!(meters_per_pixel(p.lat_deg, z + 1).unwrap(), meters_per_pixel(p.lat_deg, z).unwrap() / 2.0);
        }
    }
    assert!(worst <= 1e-9, "round trip error {worst:e} deg");
    format!("worst round trip {worst:.2e} deg")
}

fn rect_polygon(x0: f64, y0: f64, x1: f64, y1: f64, zoom: u8) -> GeoPolygon {
    let nw = world_pixel_to_latlon(x0, y0, zoom).unwrap();
    let se = world_pixel_to_latlon(x1, y1, zoom).unwrap();
    GeoRect::new(se.lat_deg, nw.lon_deg, nw.lat_deg, se.lon_deg).unwrap().to_polygon().unwrap()
}

fn bounds_px(region: &GeoPolygon, zoom: u8) -> (f64, f64, f64, f64) {
    let px: Vec<(f64, f64)> = region.exterior().iter().map(|&p| latlon_to_world_pixel(p, zoom)).collect();
    let min = |f: fn(&(f64, f64)) -> f64| px.iter().map(f).fold(f64::INFINITY, f64::min);
    let max = |f: fn(&(f64, f64)) -> f64| px.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    (min(|p| p.0), min(|p| p.1), max(|p| p.0), max(|p| p.1))
}

/// Grid cells, anchored at the bounding box's north-west corner, that overlap
/// the rectangle with positive area; row-major.
fn brute_force_cover(region: &GeoPolygon, zoom: u8, tw: u32, th: u32) -> Vec<String> {
    let (x0, y0, x1, y1) = bounds_px(region, zoom);
    let (w, h) = (f64::from(tw), f64::from(th));
    let mut ids = Vec::new();
    for r in -2i64..((y1 - y0) / h) as i64 + 3 {
        let cy = y0 + r as f64 * h;
        for c in -2i64..((x1 - x0) / w) as i64 + 3 {
            let cx = x0 + c as f64 * w;
            if cx < x1 && cx + w > x0 && cy < y1 && cy + h > y0 {
                ids.push(TileRef::from_world_center(cx + w / 2.0, cy + h / 2.0, zoom, tw, th).unwrap().tile_id);
            }
        }
    }
    ids
}

fn cover_oracle() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut total = 0;
    for case in 0..50 {
        let zoom = rng.gen_range(19..=21);
        let size = world_size_px(zoom);
        let (x0, y0) = (rng.gen_range(0.1..0.9) * size, rng.gen_range(0.3..0.7) * size);
        let (w, h) = (rng.gen_range(1.0..5000.0), rng.gen_range(1.0..5000.0));
        let (tw, th) = (rng.gen_range(64..=640), rng.gen_range(64..=640));
        let region = rect_polygon(x0, y0, x0 + w, y0 + h, zoom);
        let tiles = cover_region(&region, zoom, tw, th).unwrap();
        let ids: Vec<String> = tiles.iter().map(|t| t.tile_id.clone()).collect();
        assert_eq!(ids, brute_force_cover(&region, zoom, tw, th), "case {case}");

        // disjoint: tile centres sit on distinct cells of one grid
        let (bx, by, bx1, by1) = bounds_px(&region, zoom);
        let mut cells: Vec<(i64, i64)> = tiles
            .iter()
            .map(|t| {
                let (cx, cy) = t.world_center();
                let (c, r) = ((cx - bx) / f64::from(tw) - 0.5, (cy - by) / f64::from(th) - 0.5);
                assert!((c - c.round()).abs() < 1e-6 && (r - r.round()).abs() < 1e-6, "case {case}: off-grid tile");
                (c.round() as i64, r.round() as i64)
            })
            .collect();
        cells.sort_unstable();
        cells.dedup();
        assert_eq!(cells.len(), tiles.len(), "case {case}: overlapping tiles");

        // covered: interior sample points fall in some tile footprint
        let feet: Vec<GeoRect> = tiles.iter().map(|t| tile_footprint(t).unwrap()).collect();
        for _ in 0..50 {
            let (px, py) = (rng.gen_range(bx..bx1), rng.gen_range(by..by1));
            let p = world_pixel_to_latlon(px, py, zoom).unwrap();
            assert!(feet.iter().any(|f| f.contains(p)), "case {case}: point not covered");
        }
        total += tiles.len();
    }
    format!("50 rectangles, {total} tiles")
}

fn four_tile_rect() -> GeoRect {
    let a = TileRef::new(LatLon::new(LAT, LON).unwrap(), 21, 600, 600).unwrap();
    let (cx, cy) = a.world_center();
    let nw = tile_footprint(&a).unwrap();
    let se = tile_footprint(&TileRef::from_world_center(cx + 600.0, cy + 600.0, 21, 600, 600).unwrap()).unwrap();
    GeoRect::new(se.south, nw.west, nw.north, se.east).unwrap()
}

const PANEL: PixelRect = PixelRect { x: 130, y: 170, w: 90, h: 55 };

fn synthetic() -> SyntheticSpec {
    SyntheticSpec {
        panels: vec![SyntheticPanel { tiles: TileSelector::Indices([1, 2].into()), rect: PANEL, fill: [10, 20, 220] }],
        jitter: 8,
        seed: 4,
        ..Default::default()
    }
}

fn end_to_end() -> String {
    let spec = RegionSpec::new(vec![four_tile_rect().to_polygon().unwrap()], 21, 600, 600);
    let tiles = spec.cover().unwrap();
    assert_eq!(tiles.len(), 4);
    let provider = SyntheticProvider::new(synthetic()).with_cover(&tiles);
    let run = |width: usize| {
        let backend = StubBackend::default();
        let cfg = PipelineConfig { max_parallel_tiles: width, ..Default::default() };
        let report = analyze_region(&spec, &provider, &backend, &cfg).unwrap();
        (report, backend.segment_calls())
    };
    let (report, calls) = run(1);
    let (wide, wide_calls) = run(8);
    assert_eq!(report.totals.solar_tiles, 2);
    assert_eq!((calls, wide_calls), (2, 2), "segmentation calls");

    let k = PANEL.area() as f64;
    let band = 4.0 * (600.0 + 600.0);
    let (mut expected, mut slack) = (0.0, 0.0);
    for r in report.tile_results.iter().filter(|r| r.classified_solar) {
        let mpp2 = meters_per_pixel(r.tile.center.lat_deg, 21).unwrap().powi(2);
        let n = r.estimate.unwrap().panel_pixel_count as f64;
        assert!((n - k).abs() <= band, "tile {} has {n} pixels, expected {k} +- {band}", r.tile.tile_id);
        expected += k * mpp2;
        slack += band * mpp2;
    }
    let got = report.totals.area_m2;
    assert!((got - expected).abs() <= slack, "area {got} vs {expected} +- {slack}");

    assert_eq!(serde_json::to_vec(&report).unwrap(), serde_json::to_vec(&wide).unwrap());
    assert_eq!(geojson_bytes(&report), geojson_bytes(&wide));
    for (a, b) in report.tile_results.iter().zip(&wide.tile_results) {
        assert_eq!(a.mask, b.mask);
    }
    format!("area {got:.4} m2 vs closed form {expected:.4} +- {slack:.4}")
}

fn persistence() -> String {
    let spec = RegionSpec::new(vec![four_tile_rect().to_polygon().unwrap()], 21, 600, 600);
    let tiles = spec.cover().unwrap();
    let provider = SyntheticProvider::new(synthetic()).with_cover(&tiles);
    let report = analyze_region(&spec, &provider, &StubBackend::default(), &PipelineConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = write_bundle(dir.path(), &report, &json!({ "zoom": 21 })).unwrap();
    let bundle = read_bundle(dir.path()).unwrap();
    assert_eq!(bundle.report.totals, report.totals);
    assert_eq!(bundle.report, written);
    assert_eq!(geojson_bytes(&bundle.report), geojson_bytes(&written));
    assert_eq!(export_geojson(&written).to_string().into_bytes(), geojson_bytes(&written));
    assert_eq!(std::fs::read(dir.path().join("results.geojson")).unwrap(), geojson_bytes(&written));

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let m = random_mask(&mut rng);
        assert_eq!(decode_mask_png(&encode_mask_png(&m)).unwrap(), m);
    }
    format!("totals {:?}", (report.totals.solar_tiles, report.totals.panel_count))
}

fn service_lifecycle() -> String {
    let runs = tempfile::tempdir().unwrap();
    let cfg = ServiceConfig {
        runs_dir: runs.path().to_path_buf(),
        provider: ProviderConfig { synthetic: Some(synthetic()), ..Default::default() },
        ..Default::default()
    };
    let state = AppState::new(cfg).unwrap();
    let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    rt.spawn(panelmap_service::serve_on(listener, state));

    let http = UreqTransport::new(Duration::from_secs(10));
    let post = |body: Value| {
        let res = http.post_json(&format!("{base}/api/regions"), body.to_string().as_bytes()).unwrap();
        (res.status, serde_json::from_slice::<Value>(&res.body).unwrap())
    };
    let get = |path: &str| {
        let res = http.get(&format!("{base}{path}")).unwrap();
        (res.status, serde_json::from_slice::<Value>(&res.body).unwrap_or(Value::Null))
    };

    let rect = four_tile_rect();
    let polygon = json!({ "type": "Polygon", "coordinates": [rect.ring_lonlat()] });
    let (status, job) = post(json!({ "region": polygon, "zoom": 21 }));
    assert_eq!(status, 202, "{job}");
    let id = job["job_id"].as_str().unwrap().to_string();

    let deadline = Instant::now() + Duration::from_secs(10);
    let record = loop {
        let (status, v) = get(&format!("/api/jobs/{id}"));
        assert_eq!(status, 200);
        if v["state"] == "done" || v["state"] == "failed" {
            break v;
        }
        assert!(Instant::now() < deadline, "job stuck in {}", v["state"]);
        std::thread::sleep(Duration::from_millis(20));
    };
    assert_eq!(record["state"], "done", "{record}");

    let (status, fc) = get(&format!("/api/jobs/{id}/result"));
    assert_eq!(status, 200);
    let spec = RegionSpec::new(vec![rect.to_polygon().unwrap()], 21, 600, 600);
    let tiles = spec.cover().unwrap();
    let provider = SyntheticProvider::new(synthetic()).with_cover(&tiles);
    let direct = analyze_region(&spec, &provider, &StubBackend::default(), &PipelineConfig::default()).unwrap();
    let served: Totals = serde_json::from_value(fc["totals"].clone()).unwrap();
    assert_eq!(served, direct.totals);

    let bowtie = json!({ "type": "Polygon", "coordinates": [[[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]] });
    let (status, err) = post(json!({ "region": bowtie, "zoom": 21 }));
    assert_eq!((status, err["error"]["code"].as_str()), (400, Some("invalid_geometry")));
    let (status, err) = post(json!({ "region": polygon, "zoom": 18 }));
    assert_eq!((status, err["error"]["code"].as_str()), (400, Some("zoom_out_of_range")));

    rt.shutdown_background();
    format!("job {id} done, {} solar tiles", served.solar_tiles)
}
