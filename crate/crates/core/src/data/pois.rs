use serde::{Deserialize, Serialize};

use super::EmbeddingTable;
use crate::error::{Error, Result};
use crate::graph::{LatLon, RegionSet};

use super::regions::assign_region;

/// One line of a POI JSON Lines file. Raw POI files carry `text`; files
/// written by the embedding step carry `embedding` instead (or as well).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoiRecord {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

pub fn read_pois_jsonl(bytes: &[u8]) -> Result<Vec<PoiRecord>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse(format!("pois: not UTF-8: {e}")))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: PoiRecord = serde_json::from_str(line)
            .map_err(|e| Error::Parse(format!("pois: line {}: {e}", i + 1)))?;
        LatLon::new(rec.lat, rec.lon)
            .validate()
            .map_err(|e| Error::Parse(format!("pois: line {}: {e}", i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_pois_jsonl(pois: &[PoiRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    for p in pois {
        serde_json::to_writer(&mut out, p).expect("in-memory write");
        out.push(b'\n');
    }
    out
}

/// Averages POI vectors per containing region. Regions without any POI get
/// a zero row and coverage 0; POIs outside every region are ignored.
pub fn pool_embeddings(pois: &[(LatLon, Vec<f64>)], regions: &RegionSet) -> Result<EmbeddingTable> {
    let dim = pois.first().map(|p| p.1.len()).unwrap_or(0);
    if let Some((i, p)) = pois.iter().enumerate().find(|(_, p)| p.1.len() != dim) {
        return Err(Error::Validation(format!(
            "POI vector {i} has dimension {}, expected {dim}",
            p.1.len()
        )));
    }
    if dim == 0 {
        return Err(Error::Validation("no POI vectors to pool".into()));
    }
    let n = regions.len();
    let mut sums = vec![0.0; n * dim];
    let mut coverage = vec![0usize; n];
    for (p, v) in pois {
        if let Some(r) = assign_region(p.lat, p.lon, regions) {
            coverage[r] += 1;
            sums[r * dim..(r + 1) * dim]
                .iter_mut()
                .zip(v)
                .for_each(|(s, x)| *s += x);
        }
    }
    for r in 0..n {
        if coverage[r] > 0 {
            let c = coverage[r] as f64;
            sums[r * dim..(r + 1) * dim].iter_mut().for_each(|s| *s /= c);
        }
    }
    EmbeddingTable::new(regions.ids(), dim, sums, coverage)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::regions::load_regions;

    const TWO: &str = r#"{"type":"FeatureCollection","features":[
        {"type":"Feature","properties":{"id":"a"},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1],[0,0]]]}},
        {"type":"Feature","properties":{"id":"b"},"geometry":{"type":"Polygon","coordinates":[[[2,0],[3,0],[3,1],[2,1],[2,0]]]}}]}"#;

    #[test]
    fn average_and_empty_region() {
        let regions = load_regions(TWO.as_bytes()).unwrap();
        let pois = vec![
            (LatLon::new(0.5, 0.5), vec![1.0, 0.0]),
            (LatLon::new(0.2, 0.7), vec![0.0, 1.0]),
        ];
        let t = pool_embeddings(&pois, &regions).unwrap();
        assert_eq!(t.row(0), &[0.5, 0.5]);
        assert_eq!(t.row(1), &[0.0, 0.0]);
        assert_eq!(t.coverage(), &[2, 0]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let regions = load_regions(TWO.as_bytes()).unwrap();
        let pois = vec![
            (LatLon::new(0.5, 0.5), vec![1.0, 0.0]),
            (LatLon::new(0.5, 2.5), vec![1.0]),
        ];
        assert!(matches!(pool_embeddings(&pois, &regions), Err(Error::Validation(_))));
    }

    #[test]
    fn jsonl_roundtrip_and_line_errors() {
        let recs = vec![PoiRecord {
            id: "p".into(),
            lat: 1.0,
            lon: 2.0,
            text: Some("cafe".into()),
            embedding: None,
        }];
        let bytes = write_pois_jsonl(&recs);
        assert_eq!(read_pois_jsonl(&bytes).unwrap(), recs);
        let err = read_pois_jsonl(b"{\"id\":\"a\",\"lat\":0,\"lon\":0}\n{oops}\n").unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }
}
