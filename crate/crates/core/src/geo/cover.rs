use super::{
    check_tile_size, check_zoom, latlon_to_world_pixel, world_size_px, GeoError, GeoPolygon,
    TileRef, PX_EPS,
};

pub const DEFAULT_TILE_CAP: usize = 100_000;

type Pt = (f64, f64);

/// Tiles of `tile_w` x `tile_h` pixels covering `region` at `zoom`.
///
/// The grid is anchored at the north-west corner of the region's bounding
/// box in world pixels. A tile is kept when
/// its footprint touches the polygon. Output is row-major, north to south
/// and west to east.
pub fn cover_region(
    region: &GeoPolygon,
    zoom: u8,
    tile_w: u32,
    tile_h: u32,
) -> Result<Vec<TileRef>, GeoError> {
    cover_region_with_cap(region, zoom, tile_w, tile_h, DEFAULT_TILE_CAP)
}

pub fn cover_region_with_cap(
    region: &GeoPolygon,
    zoom: u8,
    tile_w: u32,
    tile_h: u32,
    cap: usize,
) -> Result<Vec<TileRef>, GeoError> {
    cover_polygons(std::slice::from_ref(region), zoom, tile_w, tile_h, cap)
}

/// Cover of the union of several polygons on one shared grid.
pub fn cover_polygons(
    polygons: &[GeoPolygon],
    zoom: u8,
    tile_w: u32,
    tile_h: u32,
    cap: usize,
) -> Result<Vec<TileRef>, GeoError> {
    check_zoom(zoom)?;
    check_tile_size(tile_w, tile_h)?;

    let edges: Vec<(Pt, Pt)> = polygons
        .iter()
        .flat_map(|p| p.rings())
        .flat_map(|ring| {
            let px: Vec<Pt> = ring.iter().map(|&p| latlon_to_world_pixel(p, zoom)).collect();
            px.windows(2).map(|w| (w[0], w[1])).collect::<Vec<_>>()
        })
        .collect();
    if edges.is_empty() {
        return Ok(Vec::new());
    }

    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &(a, _) in &edges {
        min_x = min_x.min(a.0);
        min_y = min_y.min(a.1);
        max_x = max_x.max(a.0);
        max_y = max_y.max(a.1);
    }

    let (tw, th) = (f64::from(tile_w), f64::from(tile_h));
    let (anchor_x, anchor_y) = (min_x, min_y);
    let cols = (((max_x - anchor_x - PX_EPS) / tw).ceil() as u64).max(1);
    let rows = (((max_y - anchor_y - PX_EPS) / th).ceil() as u64).max(1);

    let size = world_size_px(zoom);
    if anchor_x < -PX_EPS
        || anchor_y < -PX_EPS
        || anchor_x + cols as f64 * tw > size + PX_EPS
        || anchor_y + rows as f64 * th > size + PX_EPS
    {
        return Err(GeoError::OutsideWorld(max_x, max_y, zoom));
    }

    let mut tiles = Vec::new();
    let mut count: u64 = 0;
    let mut touched = vec![false; cols as usize];
    let mut crossings = Vec::new();
    for r in 0..rows {
        let y0 = anchor_y + r as f64 * th;
        let y1 = y0 + th;
        mark_edge_cells(&edges, y0, y1, anchor_x, tw, &mut touched);
        row_crossings(&edges, (y0 + y1) / 2.0, &mut crossings);

        for (c, hit) in touched.iter_mut().enumerate() {
            let x0 = anchor_x + c as f64 * tw;
            let inside = *hit || {
                let cx = x0 + tw / 2.0;
                crossings.partition_point(|&x| x < cx) % 2 == 1
            };
            *hit = false;
            if !inside {
                continue;
            }
            count += 1;
            if count as usize <= cap {
                tiles.push(TileRef::from_world_center(
                    x0 + tw / 2.0,
                    y0 + th / 2.0,
                    zoom,
                    tile_w,
                    tile_h,
                )?);
            }
        }
    }
    if count as usize > cap {
        return Err(GeoError::Capacity { tiles: count, cap });
    }
    Ok(tiles)
}

/// Flags every column whose cell in the band `[y0, y1]` is touched by an edge.
///
/// A segment clipped to the band spans every x between its clipped ends, so
/// it meets a cell exactly when the x ranges overlap.
fn mark_edge_cells(edges: &[(Pt, Pt)], y0: f64, y1: f64, anchor_x: f64, tw: f64, touched: &mut [bool]) {
    let cols = touched.len();
    for &(a, b) in edges {
        let Some((xa, xb)) = clip_to_band(a, b, y0, y1) else {
            continue;
        };
        let lo = ((xa - anchor_x) / tw).floor() - 1.0;
        let hi = ((xb - anchor_x) / tw).floor() + 1.0;
        let lo = lo.max(0.0) as usize;
        let hi = (hi.max(-1.0) as i64).min(cols as i64 - 1);
        if hi < 0 {
            continue;
        }
        for c in lo..=(hi as usize) {
            let cx0 = anchor_x + c as f64 * tw;
            if xa <= cx0 + tw && xb >= cx0 {
                touched[c] = true;
            }
        }
    }
}

/// x-extent of the part of segment `ab` inside the closed band.
fn clip_to_band(a: Pt, b: Pt, y0: f64, y1: f64) -> Option<(f64, f64)> {
    let (lo, hi) = if a.1 <= b.1 { (a, b) } else { (b, a) };
    if hi.1 < y0 || lo.1 > y1 {
        return None;
    }
    if lo.1 == hi.1 {
        return Some((a.0.min(b.0), a.0.max(b.0)));
    }
    let at = |y: f64| lo.0 + (hi.0 - lo.0) * (y - lo.1) / (hi.1 - lo.1);
    let xs = at(lo.1.max(y0));
    let xe = at(hi.1.min(y1));
    Some((xs.min(xe), xs.max(xe)))
}

fn row_crossings(edges: &[(Pt, Pt)], y: f64, out: &mut Vec<f64>) {
    out.clear();
    for &(a, b) in edges {
        if (a.1 <= y) != (b.1 <= y) {
            out.push(a.0 + (b.0 - a.0) * (y - a.1) / (b.1 - a.1));
        }
    }
    out.sort_by(f64::total_cmp);
}
