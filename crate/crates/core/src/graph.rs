//! Region graph construction and the renormalised propagation matrix.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const EARTH_RADIUS_KM: f64 = 6371.0;
pub const DEFAULT_CUTOFF_KM: f64 = 160.0;
pub const DEFAULT_SIGMA_KM: f64 = 10.0;
/// Floor applied to distances in [`WeightMode::InverseDistance`].
pub const MIN_DISTANCE_KM: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        LatLon { lat, lon }
    }

    pub fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.lat) || !(-180.0..=180.0).contains(&self.lon) {
            return Err(Error::Validation(format!(
                "coordinate ({}, {}) outside lat [-90, 90] / lon [-180, 180]",
                self.lat, self.lon
            )));
        }
        Ok(())
    }
}

/// Great-circle distance in kilometres on a sphere of radius 6371 km.
pub fn haversine_km(p1: LatLon, p2: LatLon) -> Result<f64> {
    p1.validate()?;
    p2.validate()?;
    let (phi1, phi2) = (p1.lat.to_radians(), p2.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (p2.lon - p1.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    Ok(2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub id: String,
    pub centroid: LatLon,
    /// Exterior rings, one per polygon part. Empty when only the centroid is known.
    pub rings: Vec<Vec<LatLon>>,
}

/// Ordered regions; the order is the node order of every matrix built from it.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct RegionSet {
    regions: Vec<Region>,
}

impl RegionSet {
    pub fn new(regions: Vec<Region>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &regions {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::Validation(format!("duplicate region id {:?}", r.id)));
            }
            r.centroid.validate()?;
            for p in r.rings.iter().flatten() {
                p.validate()?;
            }
        }
        Ok(RegionSet { regions })
    }

    /// Regions with only a centroid, ids `"0"`, `"1"`, ...
    pub fn from_centroids(points: &[LatLon]) -> Result<Self> {
        Self::new(
            points
                .iter()
                .enumerate()
                .map(|(i, &c)| Region {
                    id: i.to_string(),
                    centroid: c,
                    rings: Vec::new(),
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn ids(&self) -> Vec<String> {
        self.regions.iter().map(|r| r.id.clone()).collect()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.regions.iter().position(|r| r.id == id)
    }

    /// Keeps the regions at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> RegionSet {
        RegionSet {
            regions: indices.iter().map(|&i| self.regions[i].clone()).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightMode {
    /// `exp(−d² / σ²)`
    GaussianKernel { sigma_km: f64 },
    /// `1 / max(d, 1e-3 km)`
    InverseDistance,
    /// `d` itself.
    RawDistance,
}

impl Default for WeightMode {
    fn default() -> Self {
        WeightMode::GaussianKernel {
            sigma_km: DEFAULT_SIGMA_KM,
        }
    }
}

impl WeightMode {
    pub fn weight(&self, d_km: f64) -> f64 {
        match *self {
            WeightMode::GaussianKernel { sigma_km } => (-(d_km * d_km) / (sigma_km * sigma_km)).exp(),
            WeightMode::InverseDistance => 1.0 / d_km.max(MIN_DISTANCE_KM),
            WeightMode::RawDistance => d_km,
        }
    }
}

/// Undirected weighted graph over regions. The adjacency is symmetric with a
/// zero diagonal; self-loops only appear during normalisation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficGraph {
    pub region_ids: Vec<String>,
    pub cutoff_km: f64,
    pub weight_mode: WeightMode,
    /// Row-major `n × n`.
    adjacency: Vec<f64>,
}

impl TrafficGraph {
    /// Wraps an existing adjacency after checking shape, symmetry, sign and
    /// the zero diagonal.
    pub fn from_adjacency(
        region_ids: Vec<String>,
        adjacency: Vec<f64>,
        cutoff_km: f64,
        weight_mode: WeightMode,
    ) -> Result<Self> {
        let n = region_ids.len();
        if adjacency.len() != n * n {
            return Err(Error::Validation(format!(
                "adjacency has {} entries, expected {n}×{n}",
                adjacency.len()
            )));
        }
        for i in 0..n {
            if adjacency[i * n + i] != 0.0 {
                return Err(Error::Validation(format!("non-zero diagonal at node {i}")));
            }
            for j in 0..n {
                let w = adjacency[i * n + j];
                if !(w >= 0.0) || !w.is_finite() {
                    return Err(Error::Validation(format!("invalid weight {w} at ({i}, {j})")));
                }
                if w != adjacency[j * n + i] {
                    return Err(Error::Validation(format!("asymmetric weight at ({i}, {j})")));
                }
            }
        }
        Ok(TrafficGraph {
            region_ids,
            cutoff_km,
            weight_mode,
            adjacency,
        })
    }

    pub fn n(&self) -> usize {
        self.region_ids.len()
    }

    pub fn adjacency(&self) -> &[f64] {
        &self.adjacency
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[i * self.n() + j]
    }

    /// Sub-graph over `ids`, in the given order, matched by region id.
    pub fn select_ids(&self, ids: &[String]) -> Result<TrafficGraph> {
        let idx: Vec<usize> = ids
            .iter()
            .map(|id| {
                self.region_ids.iter().position(|r| r == id).ok_or_else(|| {
                    Error::Validation(format!("region {id:?} is not a node of the graph"))
                })
            })
            .collect::<Result<_>>()?;
        let n = self.n();
        let mut adjacency = Vec::with_capacity(idx.len() * idx.len());
        for &i in &idx {
            for &j in &idx {
                adjacency.push(self.adjacency[i * n + j]);
            }
        }
        Ok(TrafficGraph {
            region_ids: ids.to_vec(),
            cutoff_km: self.cutoff_km,
            weight_mode: self.weight_mode,
            adjacency,
        })
    }
}

/// Connects every pair of distinct regions whose centroids lie within
/// `cutoff_km`, weighting the edge by `mode`.
pub fn build_adjacency(regions: &RegionSet, cutoff_km: f64, mode: WeightMode) -> Result<TrafficGraph> {
    if regions.is_empty() {
        return Err(Error::Validation("graph needs at least one region".into()));
    }
    if !(cutoff_km > 0.0) {
        return Err(Error::Validation(format!("cutoff_km must be positive, got {cutoff_km}")));
    }
    if let WeightMode::GaussianKernel { sigma_km } = mode {
        if !(sigma_km > 0.0) {
            return Err(Error::Validation(format!("sigma_km must be positive, got {sigma_km}")));
        }
    }
    let n = regions.len();
    let r = regions.regions();
    let mut adjacency = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = haversine_km(r[i].centroid, r[j].centroid)?;
            if d <= cutoff_km {
                let w = mode.weight(d);
                adjacency[i * n + j] = w;
                adjacency[j * n + i] = w;
            }
        }
    }
    Ok(TrafficGraph {
        region_ids: regions.ids(),
        cutoff_km,
        weight_mode: mode,
        adjacency,
    })
}

/// `D̂^{-1/2} (A + I) D̂^{-1/2}` with `D̂` the degree matrix of `A + I`.
#[derive(Clone, Debug, PartialEq)]
pub struct PropagationMatrix {
    n: usize,
    values: Vec<f64>,
}

impl PropagationMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.n, self.n], self.values.clone()).expect("square matrix")
    }

    /// Identity propagation (a graph without edges).
    pub fn identity(n: usize) -> Self {
        PropagationMatrix {
            n,
            values: Tensor::eye(n).into_data(),
        }
    }
}

pub fn gcn_normalize(g: &TrafficGraph) -> PropagationMatrix {
    normalize_adjacency(g.n(), g.adjacency())
}

pub(crate) fn normalize_adjacency(n: usize, a: &[f64]) -> PropagationMatrix {
    let inv_sqrt_deg: Vec<f64> = (0..n)
        .map(|i| {
            let d = 1.0 + a[i * n..(i + 1) * n].iter().sum::<f64>();
            assert!(d > 0.0, "self-looped degree must be positive");
            1.0 / d.sqrt()
        })
        .collect();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let a_hat = a[i * n + j] + if i == j { 1.0 } else { 0.0 };
            values[i * n + j] = inv_sqrt_deg[i] * a_hat * inv_sqrt_deg[j];
        }
    }
    PropagationMatrix { n, values }
}
