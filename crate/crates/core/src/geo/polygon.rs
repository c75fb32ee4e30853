use std::str::FromStr;

use geojson::{GeoJson, Geometry, Value};
use serde::{Deserialize, Serialize};

use super::{GeoError, LatLon};

/// A polygon with one exterior ring and optional holes, vertices in degrees.
///
/// Rings are closed (first vertex repeated last) and free of
/// self-intersections. The polygon with no exterior ring is the empty region.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GeoPolygon {
    exterior: Vec<LatLon>,
    interiors: Vec<Vec<LatLon>>,
}

impl GeoPolygon {
    pub fn new(exterior: Vec<LatLon>, interiors: Vec<Vec<LatLon>>) -> Result<Self, GeoError> {
        validate_ring(0, &exterior)?;
        for (i, ring) in interiors.iter().enumerate() {
            validate_ring(i + 1, ring)?;
        }
        Ok(Self { exterior, interiors })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.exterior.is_empty()
    }

    pub fn exterior(&self) -> &[LatLon] {
        &self.exterior
    }

    pub fn interiors(&self) -> &[Vec<LatLon>] {
        &self.interiors
    }

    pub fn rings(&self) -> impl Iterator<Item = &[LatLon]> {
        std::iter::once(self.exterior.as_slice())
            .filter(|r| !r.is_empty())
            .chain(self.interiors.iter().map(Vec::as_slice))
    }

    /// Builds from GeoJSON-ordered `[lon, lat]` rings.
    pub fn from_lonlat_rings(rings: &[Vec<Vec<f64>>]) -> Result<Self, GeoError> {
        let mut converted = Vec::with_capacity(rings.len());
        for (i, ring) in rings.iter().enumerate() {
            let mut pts = Vec::with_capacity(ring.len());
            for pos in ring {
                if pos.len() < 2 {
                    return Err(GeoError::Ring {
                        ring: i,
                        reason: "position with fewer than two coordinates".into(),
                    });
                }
                pts.push(LatLon::new(pos[1], pos[0])?);
            }
            converted.push(pts);
        }
        let mut iter = converted.into_iter();
        match iter.next() {
            None => Ok(Self::empty()),
            Some(exterior) => Self::new(exterior, iter.collect()),
        }
    }
}

fn validate_ring(index: usize, ring: &[LatLon]) -> Result<(), GeoError> {
    let err = |reason: &str| GeoError::Ring { ring: index, reason: reason.to_string() };
    if ring.len() < 4 {
        return Err(err("fewer than 4 positions"));
    }
    if ring.first() != ring.last() {
        return Err(err("ring is not closed"));
    }
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(ring.len());
    for p in ring {
        let q = (p.lon_deg, p.lat_deg);
        if pts.last() != Some(&q) {
            pts.push(q);
        }
    }
    if pts.len() < 4 {
        return Err(err("fewer than 3 distinct vertices"));
    }
    for w in pts.windows(2) {
        if (w[1].0 - w[0].0).abs() > 180.0 {
            return Err(GeoError::Antimeridian);
        }
    }
    let n = pts.len() - 1;
    for i in 0..n {
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            let (a, b) = (pts[i], pts[i + 1]);
            let (c, d) = (pts[j], pts[j + 1]);
            if adjacent {
                let folded = if j == i + 1 { folds_back(a, b, d) } else { folds_back(c, a, b) };
                if folded {
                    return Err(err("ring folds back on itself"));
                }
            } else if segments_intersect(a, b, c, d) {
                return Err(err("ring is self-intersecting"));
            }
        }
    }
    Ok(())
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn on_segment(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> bool {
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

/// Closed segment intersection, touching endpoints included.
pub(crate) fn segments_intersect(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let (d1, d2) = (orient(c, d, a), orient(c, d, b));
    let (d3, d4) = (orient(a, b, c), orient(a, b, d));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

// Edges p->q and q->r share q; they are only invalid when the second runs
// back along the first.
fn folds_back(p: (f64, f64), q: (f64, f64), r: (f64, f64)) -> bool {
    if orient(p, q, r) != 0.0 {
        return false;
    }
    let u = (q.0 - p.0, q.1 - p.1);
    let v = (r.0 - q.0, r.1 - q.1);
    u.0 * v.0 + u.1 * v.1 < 0.0
}

/// Reads the polygons of a GeoJSON document.
///
/// Accepts a FeatureCollection, a Feature or a bare geometry. Polygon and
/// MultiPolygon geometries are supported; each member polygon is returned.
/// An empty FeatureCollection yields no polygons.
pub fn parse_region(text: &str) -> Result<Vec<GeoPolygon>, GeoError> {
    let doc = GeoJson::from_str(text).map_err(|e| GeoError::GeoJson(e.to_string()))?;
    match doc {
        GeoJson::Geometry(g) => polygons_from_geometry(&g),
        GeoJson::Feature(f) => match f.geometry {
            Some(g) => polygons_from_geometry(&g),
            None => Err(GeoError::GeoJson("feature has no geometry".into())),
        },
        GeoJson::FeatureCollection(fc) => {
            let mut out = Vec::new();
            for g in fc.features.iter().filter_map(|f| f.geometry.as_ref()) {
                out.extend(polygons_from_geometry(g)?);
            }
            Ok(out)
        }
    }
}

fn polygons_from_geometry(g: &Geometry) -> Result<Vec<GeoPolygon>, GeoError> {
    match &g.value {
        Value::Polygon(rings) => Ok(vec![GeoPolygon::from_lonlat_rings(rings)?]),
        Value::MultiPolygon(polys) => polys.iter().map(|rings| GeoPolygon::from_lonlat_rings(rings)).collect(),
        other => Err(GeoError::GeoJson(format!(
            "unsupported geometry type {}",
            other.type_name()
        ))),
    }
}
