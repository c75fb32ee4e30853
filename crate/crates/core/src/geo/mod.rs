//! Spherical Web-Mercator geodesy.
//!
//! Everything here is pure: projection to and from the `256 * 2^zoom` world
//! pixel square, ground resolution, tile footprints and polygon tile cover.

mod cover;
mod polygon;

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cover::{cover_polygons, cover_region, cover_region_with_cap, DEFAULT_TILE_CAP};
pub use polygon::{parse_region, GeoPolygon};

/// Ground resolution in m/px at the equator for zoom 0.
pub const MERCATOR_CONSTANT: f64 = 156543.03392;

/// Latitude at which the Mercator square closes (`atan(sinh(pi))`).
pub const MAX_LATITUDE: f64 = 85.051_128_779_806_59;

pub const MAX_ZOOM: u8 = 22;

/// Edge length of the zoom-0 world in pixels.
pub const WORLD_TILE_PX: f64 = 256.0;

pub const MAX_TILE_PX: u32 = 1280;

/// Slack used when comparing world-pixel coordinates that went through a
/// projection round trip.
pub(crate) const PX_EPS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} outside the projectable range")]
    Latitude(f64),
    #[error("longitude {0} outside [-180, 180]")]
    Longitude(f64),
    #[error("zoom {0} outside [0, {MAX_ZOOM}]")]
    Zoom(i64),
    #[error("tile dimensions {0}x{1} outside [1, {MAX_TILE_PX}]")]
    TileSize(u32, u32),
    #[error("world pixel ({0}, {1}) outside the world square at zoom {2}")]
    OutsideWorld(f64, f64, u8),
    #[error("invalid rectangle: {0}")]
    Rect(String),
    #[error("ring {ring}: {reason}")]
    Ring { ring: usize, reason: String },
    #[error("region crosses the antimeridian")]
    Antimeridian,
    #[error("region needs {tiles} tiles, cap is {cap}")]
    Capacity { tiles: u64, cap: usize },
    #[error("geojson: {0}")]
    GeoJson(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat_deg: f64,
    pub lon_deg: f64,
}

impl LatLon {
    /// Validates latitude and normalizes longitude to `[-180, 180)`.
    pub fn new(lat_deg: f64, lon_deg: f64) -> Result<Self, GeoError> {
        check_lat(lat_deg)?;
        if !(-180.0..=180.0).contains(&lon_deg) {
            return Err(GeoError::Longitude(lon_deg));
        }
        let lon_deg = if lon_deg == 180.0 { -180.0 } else { lon_deg };
        Ok(Self { lat_deg, lon_deg })
    }
}

impl fmt::Display for LatLon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lat_deg, self.lon_deg)
    }
}

fn check_lat(lat: f64) -> Result<(), GeoError> {
    if lat.is_nan() || lat.abs() > MAX_LATITUDE {
        return Err(GeoError::Latitude(lat));
    }
    Ok(())
}

fn check_zoom(zoom: u8) -> Result<(), GeoError> {
    if zoom > MAX_ZOOM {
        return Err(GeoError::Zoom(zoom.into()));
    }
    Ok(())
}

/// Edge length of the world square in pixels at `zoom`.
pub fn world_size_px(zoom: u8) -> f64 {
    WORLD_TILE_PX * 2f64.powi(zoom.into())
}

/// Ground length covered by one pixel at `lat_deg` and `zoom`.
pub fn meters_per_pixel(lat_deg: f64, zoom: u8) -> Result<f64, GeoError> {
    check_lat(lat_deg)?;
    check_zoom(zoom)?;
    Ok(MERCATOR_CONSTANT * (lat_deg * PI / 180.0).cos() / 2f64.powi(zoom.into()))
}

pub fn latlon_to_world_pixel(p: LatLon, zoom: u8) -> (f64, f64) {
    let size = world_size_px(zoom);
    let x = (p.lon_deg + 180.0) / 360.0 * size;
    let phi = p.lat_deg.to_radians();
    // asinh(tan) == ln(tan + sec), better conditioned near the poles
    let y = (1.0 - phi.tan().asinh() / PI) / 2.0 * size;
    (x, y)
}

/// Inverse projection without longitude wrapping; `x == size` maps to +180.
pub(crate) fn world_pixel_to_lonlat_raw(x: f64, y: f64, zoom: u8) -> (f64, f64) {
    let size = world_size_px(zoom);
    let lon = x / size * 360.0 - 180.0;
    let lat = (PI * (1.0 - 2.0 * y / size)).sinh().atan().to_degrees();
    (lon, lat)
}

pub fn world_pixel_to_latlon(x: f64, y: f64, zoom: u8) -> Result<LatLon, GeoError> {
    check_zoom(zoom)?;
    let size = world_size_px(zoom);
    if !(0.0..=size).contains(&x) || !(0.0..=size).contains(&y) {
        return Err(GeoError::OutsideWorld(x, y, zoom));
    }
    let (lon, lat) = world_pixel_to_lonlat_raw(x, y, zoom);
    LatLon::new(lat.clamp(-MAX_LATITUDE, MAX_LATITUDE), lon.clamp(-180.0, 180.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoRect {
    pub south: f64,
    pub west: f64,
    pub north: f64,
    pub east: f64,
}

impl GeoRect {
    pub fn new(south: f64, west: f64, north: f64, east: f64) -> Result<Self, GeoError> {
        if !(south < north) {
            return Err(GeoError::Rect(format!("south {south} must be below north {north}")));
        }
        if !(west < east) {
            return Err(GeoError::Antimeridian);
        }
        Ok(Self { south, west, north, east })
    }

    pub fn contains(&self, p: LatLon) -> bool {
        let eps = 1e-9;
        p.lat_deg >= self.south - eps
            && p.lat_deg <= self.north + eps
            && p.lon_deg >= self.west - eps
            && p.lon_deg <= self.east + eps
    }

    /// Closed counter-clockwise ring `[lon, lat]` starting at the south-west corner.
    pub fn ring_lonlat(&self) -> [[f64; 2]; 5] {
        [
            [self.west, self.south],
            [self.east, self.south],
            [self.east, self.north],
            [self.west, self.north],
            [self.west, self.south],
        ]
    }

    pub fn to_polygon(&self) -> Result<GeoPolygon, GeoError> {
        let ring = self
            .ring_lonlat()
            .iter()
            .map(|&[lon, lat]| LatLon::new(lat, lon))
            .collect::<Result<Vec<_>, _>>()?;
        GeoPolygon::new(ring, Vec::new())
    }
}

/// A fixed-size image patch centred on a geographic point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileRef {
    pub center: LatLon,
    pub zoom: u8,
    pub width_px: u32,
    pub height_px: u32,
    pub tile_id: String,
}

impl TileRef {
    pub fn new(center: LatLon, zoom: u8, width_px: u32, height_px: u32) -> Result<Self, GeoError> {
        check_zoom(zoom)?;
        check_tile_size(width_px, height_px)?;
        let (x, y) = latlon_to_world_pixel(center, zoom);
        Ok(Self {
            center,
            zoom,
            width_px,
            height_px,
            tile_id: tile_id(zoom, x, y),
        })
    }

    /// Builds a tile from its world-pixel centre, keying it on that centre
    /// directly rather than on the projected round trip.
    pub fn from_world_center(
        x: f64,
        y: f64,
        zoom: u8,
        width_px: u32,
        height_px: u32,
    ) -> Result<Self, GeoError> {
        check_tile_size(width_px, height_px)?;
        let center = world_pixel_to_latlon(x, y, zoom)?;
        Ok(Self {
            center,
            zoom,
            width_px,
            height_px,
            tile_id: tile_id(zoom, x, y),
        })
    }

    pub fn world_center(&self) -> (f64, f64) {
        latlon_to_world_pixel(self.center, self.zoom)
    }
}

fn check_tile_size(w: u32, h: u32) -> Result<(), GeoError> {
    if w == 0 || h == 0 || w > MAX_TILE_PX || h > MAX_TILE_PX {
        return Err(GeoError::TileSize(w, h));
    }
    Ok(())
}

// Half-pixel centres that went through a projection round trip land a hair
// either side of .5; the bias makes them round the same way.
fn round_px(v: f64) -> i64 {
    (v + 0.5 + 1e-7).floor() as i64
}

fn tile_id(zoom: u8, x: f64, y: f64) -> String {
    format!("z{}_x{}_y{}", zoom, round_px(x), round_px(y))
}

/// Geographic rectangle covered by `t`.
pub fn tile_footprint(t: &TileRef) -> Result<GeoRect, GeoError> {
    let (x0, y0, x1, y1) = footprint_px(t)?;
    let (west, north) = world_pixel_to_lonlat_raw(x0, y0, t.zoom);
    let (east, south) = world_pixel_to_lonlat_raw(x1, y1, t.zoom);
    GeoRect::new(south, west, north, east)
}

/// Footprint in world pixels as `(x0, y0, x1, y1)`.
pub(crate) fn footprint_px(t: &TileRef) -> Result<(f64, f64, f64, f64), GeoError> {
    let (cx, cy) = t.world_center();
    let (hw, hh) = (f64::from(t.width_px) / 2.0, f64::from(t.height_px) / 2.0);
    let size = world_size_px(t.zoom);
    let (mut x0, mut y0, mut x1, mut y1) = (cx - hw, cy - hh, cx + hw, cy + hh);
    for v in [x0, y0, x1, y1] {
        if v < -PX_EPS || v > size + PX_EPS {
            return Err(GeoError::OutsideWorld(cx, cy, t.zoom));
        }
    }
    x0 = x0.max(0.0);
    y0 = y0.max(0.0);
    x1 = x1.min(size);
    y1 = y1.min(size);
    Ok((x0, y0, x1, y1))
}
