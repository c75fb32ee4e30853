use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use panelmap::geo::cover_region;
use panelmap::inference::{preprocess, PixelScaling, StubBackend, SEGMENTER_SIZE};
use panelmap::pipeline::{analyze_tile, binarize, resize_mask};
use panelmap::store::{encode_mask_png, export_geojson};
use panelmap::{InferenceBackend, PipelineConfig};
use panelmap_bench::{grid_region, report, solar_tile};

fn cover(c: &mut Criterion) {
    let small = grid_region(4, 4);
    let large = grid_region(100, 100);
    c.bench_function("cover 4x4", |b| b.iter(|| cover_region(black_box(&small), 21, 600, 600).unwrap()));
    c.bench_function("cover 100x100", |b| b.iter(|| cover_region(black_box(&large), 21, 600, 600).unwrap()));
}

fn preprocessing(c: &mut Criterion) {
    let img = solar_tile();
    c.bench_function("preprocess 600->512", |b| {
        b.iter(|| preprocess(black_box(img.pixels()), SEGMENTER_SIZE, SEGMENTER_SIZE, PixelScaling::Raw))
    });
}

fn tile(c: &mut Criterion) {
    let img = solar_tile();
    let backend = StubBackend::default();
    let cfg = PipelineConfig::default();
    c.bench_function("analyze_tile stub", |b| b.iter(|| analyze_tile(black_box(&img), &backend, &cfg).unwrap()));

    let mask = binarize(&backend.segment(&img).unwrap(), cfg.mask_threshold);
    c.bench_function("mask resize 512->600", |b| b.iter(|| resize_mask(black_box(&mask), 600, 600)));
    let full = resize_mask(&mask, 600, 600);
    c.bench_function("mask png encode", |b| b.iter(|| encode_mask_png(black_box(&full))));
}

fn export(c: &mut Criterion) {
    let r = report(8, 8);
    c.bench_function("export_geojson 8x8", |b| b.iter(|| export_geojson(black_box(&r))));
}

criterion_group!(benches, cover, preprocessing, tile, export);
criterion_main!(benches);
