//! Fixtures shared by the benchmarks.

use panelmap::geo::{tile_footprint, GeoRect};
use panelmap::imagery::{PixelRect, SyntheticPanel, SyntheticProvider, SyntheticSpec, TileSelector};
use panelmap::inference::StubBackend;
use panelmap::pipeline::analyze_tiles;
use panelmap::{GeoPolygon, ImageTile, ImageryProvider, LatLon, PipelineConfig, RegionReport, RegionSpec, TileRef};

pub const LAT: f64 = 37.8716;
pub const LON: f64 = -122.2727;

/// Rectangle spanning `cols` x `rows` tiles of 600 px at zoom 21.
pub fn grid_region(cols: u32, rows: u32) -> GeoPolygon {
    let a = TileRef::new(LatLon::new(LAT, LON).unwrap(), 21, 600, 600).unwrap();
    let (cx, cy) = a.world_center();
    let nw = tile_footprint(&a).unwrap();
    let far = TileRef::from_world_center(cx + 600.0 * f64::from(cols - 1), cy + 600.0 * f64::from(rows - 1), 21, 600, 600)
        .unwrap();
    let se = tile_footprint(&far).unwrap();
    GeoRect::new(se.south, nw.west, nw.north, se.east).unwrap().to_polygon().unwrap()
}

/// Noisy imagery with a panel block on every other tile.
pub fn provider(cover: &[TileRef]) -> SyntheticProvider {
    let spec = SyntheticSpec {
        panels: vec![SyntheticPanel {
            tiles: TileSelector::Indices((0..cover.len()).step_by(2).collect()),
            rect: PixelRect::new(150, 220, 120, 80),
            fill: [15, 25, 210],
        }],
        jitter: 8,
        seed: 1,
        ..Default::default()
    };
    SyntheticProvider::new(spec).with_cover(cover)
}

pub fn solar_tile() -> ImageTile {
    let tile = TileRef::new(LatLon::new(LAT, LON).unwrap(), 21, 600, 600).unwrap();
    provider(std::slice::from_ref(&tile)).fetch(&tile).unwrap()
}

/// Analysed `cols` x `rows` region with stub inference.
pub fn report(cols: u32, rows: u32) -> RegionReport {
    let spec = RegionSpec::new(vec![grid_region(cols, rows)], 21, 600, 600);
    let tiles = spec.cover().unwrap();
    let p = provider(&tiles);
    analyze_tiles(&spec, &tiles, &p, &StubBackend::default(), &PipelineConfig::default(), &mut |_, _| {}).unwrap()
}
