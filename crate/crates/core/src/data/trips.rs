use std::collections::HashMap;

use chrono::{DateTime, Duration, Utc};

use super::DemandMatrix;
use crate::error::{Error, Result};
use crate::graph::{LatLon, RegionSet};

use super::regions::assign_region;

#[derive(Clone, Debug, PartialEq)]
pub enum TripOrigin {
    Coords(LatLon),
    Region(String),
}

/// One trip initiation.
#[derive(Clone, Debug, PartialEq)]
pub struct TripRecord {
    pub start_time: DateTime<Utc>,
    pub origin: TripOrigin,
}

/// Result of reading a trip CSV: parsed rows plus the count of rows that
/// could not be parsed.
#[derive(Clone, Debug, Default)]
pub struct TripParse {
    pub records: Vec<TripRecord>,
    pub skipped: usize,
}

impl TripParse {
    pub fn total_rows(&self) -> usize {
        self.records.len() + self.skipped
    }
}

/// Reads `start_time,start_lat,start_lon` or `start_time,region_id` CSV
/// (RFC 3339 timestamps). Columns are looked up by header name so extra
/// columns are ignored. Bad rows are logged and skipped.
pub fn read_trips_csv(bytes: &[u8]) -> Result<TripParse> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse(format!("trips: cannot read header: {e}")))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let time_col = col("start_time")
        .ok_or_else(|| Error::Parse("trips: header lacks a start_time column".into()))?;
    let (lat_col, lon_col, region_col) = (col("start_lat"), col("start_lon"), col("region_id"));
    let has_coords = lat_col.is_some() && lon_col.is_some();
    if !has_coords && region_col.is_none() {
        return Err(Error::Parse(
            "trips: header needs start_lat,start_lon or region_id".into(),
        ));
    }

    let mut out = TripParse::default();
    for (row, rec) in reader.records().enumerate() {
        let line = row + 2;
        let parsed = rec
            .map_err(|e| e.to_string())
            .and_then(|rec| parse_row(&rec, time_col, lat_col.zip(lon_col), region_col));
        match parsed {
            Ok(r) => out.records.push(r),
            Err(reason) => {
                log::warn!("trips: skipping line {line}: {reason}");
                out.skipped += 1;
            }
        }
    }
    if out.skipped > 0 {
        log::warn!("trips: skipped {} unparseable row(s)", out.skipped);
    }
    Ok(out)
}

fn parse_row(
    rec: &csv::StringRecord,
    time_col: usize,
    coord_cols: Option<(usize, usize)>,
    region_col: Option<usize>,
) -> std::result::Result<TripRecord, String> {
    let field = |i: usize| rec.get(i).filter(|s| !s.is_empty());
    let ts = field(time_col).ok_or("missing start_time")?;
    let start_time = DateTime::parse_from_rfc3339(ts)
        .map_err(|e| format!("bad timestamp {ts:?}: {e}"))?
        .with_timezone(&Utc);
    let coords = coord_cols.and_then(|(a, b)| Some((field(a)?, field(b)?)));
    let region = region_col.and_then(field);
    let origin = match (coords, region) {
        (Some((lat, lon)), None) => {
            let p = LatLon::new(
                lat.parse().map_err(|_| format!("bad latitude {lat:?}"))?,
                lon.parse().map_err(|_| format!("bad longitude {lon:?}"))?,
            );
            p.validate().map_err(|e| e.to_string())?;
            TripOrigin::Coords(p)
        }
        (None, Some(id)) => TripOrigin::Region(id.to_string()),
        (Some(_), Some(_)) => return Err("both coordinates and region_id present".into()),
        (None, None) => return Err("no start location".into()),
    };
    Ok(TripRecord { start_time, origin })
}

/// Accounting for [`aggregate_demand`]: every input record lands in exactly
/// one bucket.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AggregateReport {
    pub counted: usize,
    pub out_of_span: usize,
    pub unassigned: usize,
    /// Rows that failed to parse upstream; filled by callers that read CSV.
    pub skipped: usize,
}

impl AggregateReport {
    pub fn total(&self) -> usize {
        self.counted + self.out_of_span + self.unassigned + self.skipped
    }
}

/// Counts trip starts per `(bin, region)` over `[t_start, t_end)`.
pub fn aggregate_demand(
    trips: &[TripRecord],
    regions: &RegionSet,
    t_start: DateTime<Utc>,
    t_end: DateTime<Utc>,
    bin: Duration,
) -> Result<(DemandMatrix, AggregateReport)> {
    if t_start >= t_end {
        return Err(Error::Validation(format!(
            "empty span: t_start {t_start} is not before t_end {t_end}"
        )));
    }
    let bin_s = bin.num_seconds();
    let span_s = (t_end - t_start).num_seconds();
    if bin_s <= 0 || span_s % bin_s != 0 {
        return Err(Error::Validation(format!(
            "bin of {bin_s}s does not evenly divide the {span_s}s span"
        )));
    }
    let steps = (span_s / bin_s) as usize;
    let n = regions.len();
    let by_id: HashMap<&str, usize> = regions
        .regions()
        .iter()
        .enumerate()
        .map(|(i, r)| (r.id.as_str(), i))
        .collect();

    let mut values = vec![0.0; steps * n];
    let mut report = AggregateReport::default();
    for trip in trips {
        if trip.start_time < t_start || trip.start_time >= t_end {
            report.out_of_span += 1;
            continue;
        }
        let region = match &trip.origin {
            TripOrigin::Coords(p) => assign_region(p.lat, p.lon, regions),
            TripOrigin::Region(id) => by_id.get(id.as_str()).copied(),
        };
        let Some(r) = region else {
            report.unassigned += 1;
            continue;
        };
        let t = ((trip.start_time - t_start).num_seconds() / bin_s) as usize;
        values[t * n + r] += 1.0;
        report.counted += 1;
    }
    let demand = DemandMatrix::new(values, steps, regions.ids(), t_start, bin_s)?;
    Ok((demand, report))
}
