//! Ingestion and preparation of demand, region and POI data.

mod pois;
mod regions;
mod synth;
mod trips;
mod window;

pub use pois::{pool_embeddings, read_pois_jsonl, write_pois_jsonl, PoiRecord};
pub use regions::{assign_region, load_regions};
pub use synth::{synth_generate, SynthConfig, SynthData, SynthProcess};
pub use trips::{aggregate_demand, read_trips_csv, AggregateReport, TripOrigin, TripParse, TripRecord};
pub use window::{
    make_windows, prepare_windows, NormMode, Normalizer, Split, SplitRatios, WindowedDataset,
    MIN_STD,
};

use chrono::{DateTime, Utc};

use crate::error::{Error, Result};
use crate::graph::RegionSet;

/// `T × n` demand per time bin and region, row-major (time-major).
#[derive(Clone, Debug, PartialEq)]
pub struct DemandMatrix {
    values: Vec<f64>,
    t: usize,
    region_ids: Vec<String>,
    pub t0: DateTime<Utc>,
    pub bin_seconds: i64,
}

impl DemandMatrix {
    pub fn new(
        values: Vec<f64>,
        t: usize,
        region_ids: Vec<String>,
        t0: DateTime<Utc>,
        bin_seconds: i64,
    ) -> Result<Self> {
        let n = region_ids.len();
        if t == 0 || n == 0 {
            return Err(Error::Validation(format!("demand matrix must be non-empty, got {t}×{n}")));
        }
        if values.len() != t * n {
            return Err(Error::Validation(format!(
                "demand has {} values, expected {t}×{n}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Validation(format!("demand value {v} is not a non-negative number")));
        }
        if bin_seconds <= 0 {
            return Err(Error::Validation(format!("bin of {bin_seconds}s is not positive")));
        }
        Ok(DemandMatrix {
            values,
            t,
            region_ids,
            t0,
            bin_seconds,
        })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn n(&self) -> usize {
        self.region_ids.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn region_ids(&self) -> &[String] {
        &self.region_ids
    }

    pub fn get(&self, t: usize, r: usize) -> f64 {
        self.values[t * self.n() + r]
    }

    pub fn column_total(&self, r: usize) -> f64 {
        (0..self.t).map(|t| self.get(t, r)).sum()
    }

    /// Keeps the columns at `cols`, in that order.
    pub fn select_columns(&self, cols: &[usize]) -> DemandMatrix {
        let n = self.n();
        let mut values = Vec::with_capacity(self.t * cols.len());
        for t in 0..self.t {
            values.extend(cols.iter().map(|&c| self.values[t * n + c]));
        }
        DemandMatrix {
            values,
            t: self.t,
            region_ids: cols.iter().map(|&c| self.region_ids[c].clone()).collect(),
            t0: self.t0,
            bin_seconds: self.bin_seconds,
        }
    }
}

/// Pooled per-region text-embedding vectors, `n × dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    region_ids: Vec<String>,
    dim: usize,
    values: Vec<f64>,
    coverage: Vec<usize>,
}

impl EmbeddingTable {
    pub fn new(region_ids: Vec<String>, dim: usize, values: Vec<f64>, coverage: Vec<usize>) -> Result<Self> {
        let n = region_ids.len();
        if dim == 0 || values.len() != n * dim || coverage.len() != n {
            return Err(Error::Validation(format!(
                "embedding table for {n} regions × {dim} dims has {} values and {} coverage entries",
                values.len(),
                coverage.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("embedding table contains non-finite values".into()));
        }
        for r in 0..n {
            if coverage[r] == 0 && values[r * dim..(r + 1) * dim].iter().any(|&v| v != 0.0) {
                return Err(Error::Validation(format!(
                    "region {:?} has no POIs but a non-zero embedding",
                    region_ids[r]
                )));
            }
        }
        Ok(EmbeddingTable {
            region_ids,
            dim,
            values,
            coverage,
        })
    }

    pub fn n(&self) -> usize {
        self.region_ids.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.dim..(r + 1) * self.dim]
    }

    pub fn coverage(&self) -> &[usize] {
        &self.coverage
    }

    pub fn region_ids(&self) -> &[String] {
        &self.region_ids
    }

    pub fn select_rows(&self, rows: &[usize]) -> EmbeddingTable {
        EmbeddingTable {
            region_ids: rows.iter().map(|&r| self.region_ids[r].clone()).collect(),
            dim: self.dim,
            values: rows.iter().flat_map(|&r| self.row(r).iter().copied()).collect(),
            coverage: rows.iter().map(|&r| self.coverage[r]).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FilterReport {
    pub kept: usize,
    pub dropped: Vec<String>,
}

/// Result of [`filter_complete`]: all parts share one region order.
#[derive(Clone, Debug)]
pub struct CompleteData {
    pub demand: DemandMatrix,
    pub embeddings: Option<EmbeddingTable>,
    pub regions: RegionSet,
    pub report: FilterReport,
}

/// Keeps regions with non-zero total demand and (when embeddings are given)
/// at least one pooled POI, re-indexing every input consistently.
pub fn filter_complete(
    demand: &DemandMatrix,
    embeddings: Option<&EmbeddingTable>,
    regions: &RegionSet,
) -> Result<CompleteData> {
    let ids = regions.ids();
    if demand.region_ids() != ids.as_slice() {
        return Err(Error::Validation("demand columns are not in region order".into()));
    }
    if let Some(e) = embeddings {
        if e.region_ids() != ids.as_slice() {
            return Err(Error::Validation("embedding rows are not in region order".into()));
        }
    }
    let (keep, drop): (Vec<usize>, Vec<usize>) = (0..regions.len()).partition(|&r| {
        demand.column_total(r) > 0.0 && embeddings.is_none_or(|e| e.coverage()[r] > 0)
    });
    if keep.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "none of the {} regions has both demand and POI coverage",
            regions.len()
        )));
    }
    Ok(CompleteData {
        demand: demand.select_columns(&keep),
        embeddings: embeddings.map(|e| e.select_rows(&keep)),
        regions: regions.select(&keep),
        report: FilterReport {
            kept: keep.len(),
            dropped: drop.iter().map(|&r| ids[r].clone()).collect(),
        },
    })
}
