use serde_json::Value;

use crate::error::{Error, Result};
use crate::graph::{LatLon, Region, RegionSet};

/// Parses a GeoJSON `FeatureCollection` of `Polygon`/`MultiPolygon` features.
/// Each feature needs an `id` property; regions keep file order and the
/// centroid is the mean of the exterior-ring vertices (closing vertex
/// excluded).
pub fn load_regions(geojson: &[u8]) -> Result<RegionSet> {
    let root: Value = serde_json::from_slice(geojson)
        .map_err(|e| Error::Parse(format!("regions: invalid JSON: {e}")))?;
    if root.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(Error::Parse("regions: expected a GeoJSON FeatureCollection".into()));
    }
    let features = root
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Parse("regions: missing \"features\" array".into()))?;
    let mut regions = Vec::with_capacity(features.len());
    for (idx, feature) in features.iter().enumerate() {
        let fail = |msg: &str| Error::Parse(format!("regions: feature {idx}: {msg}"));
        let id = match feature.get("properties").and_then(|p| p.get("id")) {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => return Err(fail("missing string property \"id\"")),
        };
        let geometry = feature.get("geometry").ok_or_else(|| fail("missing geometry"))?;
        let coords = geometry.get("coordinates").ok_or_else(|| fail("missing coordinates"))?;
        let polygons: Vec<&Value> = match geometry.get("type").and_then(Value::as_str) {
            Some("Polygon") => vec![coords],
            Some("MultiPolygon") => coords
                .as_array()
                .ok_or_else(|| fail("MultiPolygon coordinates must be an array"))?
                .iter()
                .collect(),
            Some(other) => return Err(fail(&format!("unsupported geometry type {other:?}"))),
            None => return Err(fail("geometry without type")),
        };
        let mut rings = Vec::with_capacity(polygons.len());
        for poly in polygons {
            let exterior = poly
                .as_array()
                .and_then(|r| r.first())
                .ok_or_else(|| fail("polygon without exterior ring"))?;
            rings.push(parse_ring(exterior).map_err(|m| fail(&m))?);
        }
        let vertices: Vec<LatLon> = rings.iter().flat_map(|r| open_ring(r)).copied().collect();
        if vertices.is_empty() {
            return Err(fail("empty polygon"));
        }
        let k = vertices.len() as f64;
        let centroid = LatLon::new(
            vertices.iter().map(|p| p.lat).sum::<f64>() / k,
            vertices.iter().map(|p| p.lon).sum::<f64>() / k,
        );
        regions.push(Region { id, centroid, rings });
    }
    RegionSet::new(regions)
}

fn parse_ring(v: &Value) -> std::result::Result<Vec<LatLon>, String> {
    let pts = v.as_array().ok_or("ring must be an array of positions")?;
    if pts.len() < 3 {
        return Err(format!("ring has {} positions, need at least 3", pts.len()));
    }
    pts.iter()
        .map(|p| {
            let pair = p.as_array().filter(|a| a.len() >= 2).ok_or("position must be [lon, lat]")?;
            match (pair[0].as_f64(), pair[1].as_f64()) {
                (Some(lon), Some(lat)) => Ok(LatLon::new(lat, lon)),
                _ => Err("non-numeric coordinate".to_string()),
            }
        })
        .collect()
}

/// Ring vertices without the repeated closing vertex.
fn open_ring(ring: &[LatLon]) -> &[LatLon] {
    match (ring.first(), ring.last()) {
        (Some(a), Some(b)) if ring.len() > 1 && a == b => &ring[..ring.len() - 1],
        _ => ring,
    }
}

/// Index of the first region (in set order) whose polygon contains the
/// point. Points on a boundary count as inside.
pub fn assign_region(lat: f64, lon: f64, regions: &RegionSet) -> Option<usize> {
    regions
        .regions()
        .iter()
        .position(|r| r.rings.iter().any(|ring| ring_contains(ring, lat, lon)))
}

fn ring_contains(ring: &[LatLon], lat: f64, lon: f64) -> bool {
    let pts = open_ring(ring);
    let k = pts.len();
    if k < 3 {
        return false;
    }
    let (x, y) = (lon, lat);
    let mut inside = false;
    for i in 0..k {
        let (a, b) = (pts[i], pts[(i + 1) % k]);
        let (x1, y1, x2, y2) = (a.lon, a.lat, b.lon, b.lat);
        if on_segment(x, y, x1, y1, x2, y2) {
            return true;
        }
        if (y1 > y) != (y2 > y) {
            let xi = x1 + (y - y1) * (x2 - x1) / (y2 - y1);
            if x < xi {
                inside = !inside;
            }
        }
    }
    inside
}

fn on_segment(x: f64, y: f64, x1: f64, y1: f64, x2: f64, y2: f64) -> bool {
    let cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1);
    cross == 0.0 && x >= x1.min(x2) && x <= x1.max(x2) && y >= y1.min(y2) && y <= y1.max(y2)
}
