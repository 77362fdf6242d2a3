//! File formats: the dataset container, model checkpoints and graph files.
//!
//! Dataset and checkpoint files share one binary layout:
//!
//! | bytes | content |
//! |---|---|
//! | 8 | magic (`STGCNDS\0` or `STGCNCK1`) |
//! | 8 | header length `L`, u64 little-endian |
//! | `L` | UTF-8 JSON header |
//! | rest | payload of f64 little-endian values |

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::{DemandMatrix, EmbeddingTable, Normalizer, SplitRatios};
use crate::error::{Error, Result};
use crate::graph::{TrafficGraph, WeightMode};
use crate::model::{ArchConfig, ModelParams};
use crate::tensor::Tensor;

pub const DATASET_MAGIC: &[u8; 8] = b"STGCNDS\0";
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"STGCNCK1";
pub const FORMAT_VERSION: u32 = 1;

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn encode_container<H: Serialize>(magic: &[u8; 8], header: &H, payload: &[&[f64]]) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header).map_err(|e| Error::Parse(e.to_string()))?;
    let count: usize = payload.iter().map(|p| p.len()).sum();
    let mut out = Vec::with_capacity(16 + json.len() + 8 * count);
    out.extend_from_slice(magic);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for part in payload {
        for v in *part {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Splits a container into its parsed header, the payload values and the
/// payload's byte offset.
fn decode_container<H: DeserializeOwned>(bytes: &[u8], magic: &[u8; 8], path: &Path) -> Result<(H, Vec<f64>, u64)> {
    let corrupt = |offset: usize, detail: String| Error::Corrupt { path: path.to_path_buf(), offset: offset as u64, detail };
    if bytes.len() < 16 {
        return Err(corrupt(bytes.len(), "file shorter than the 16-byte preamble".into()));
    }
    if &bytes[..8] != magic {
        return Err(corrupt(0, format!("bad magic, expected {:?}", String::from_utf8_lossy(magic))));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let end = usize::try_from(len).ok().and_then(|l| l.checked_add(16)).filter(|&e| e <= bytes.len());
    let Some(end) = end else {
        return Err(corrupt(8, format!("header length {len} runs past the end of the file")));
    };
    let header: H = serde_json::from_slice(&bytes[16..end]).map_err(|e| corrupt(16 + e.column().saturating_sub(1), format!("bad header: {e}")))?;
    let payload = &bytes[end..];
    if payload.len() % 8 != 0 {
        return Err(corrupt(bytes.len(), format!("payload of {} bytes is not a whole number of f64 values", payload.len())));
    }
    let values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok((header, values, end as u64))
}

/// Demand plus optional per-region embeddings, sharing one region order.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub demand: DemandMatrix,
    pub embeddings: Option<EmbeddingTable>,
}

impl Dataset {
    pub fn new(demand: DemandMatrix, embeddings: Option<EmbeddingTable>) -> Result<Self> {
        if let Some(e) = &embeddings {
            if e.region_ids() != demand.region_ids() {
                return Err(Error::Validation("embedding rows and demand columns list different regions".into()));
            }
        }
        Ok(Dataset { demand, embeddings })
    }

    pub fn region_ids(&self) -> &[String] {
        self.demand.region_ids()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetHeader {
    format: String,
    version: u32,
    t0: DateTime<Utc>,
    bin_seconds: i64,
    region_ids: Vec<String>,
    demand_shape: [usize; 2],
    embedding_shape: Option<[usize; 2]>,
    embedding_coverage: Option<Vec<usize>>,
}

pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>> {
    let d = &ds.demand;
    let header = DatasetHeader {
        format: "stgcn-dataset".into(),
        version: FORMAT_VERSION,
        t0: d.t0,
        bin_seconds: d.bin_seconds,
        region_ids: d.region_ids().to_vec(),
        demand_shape: [d.t(), d.n()],
        embedding_shape: ds.embeddings.as_ref().map(|e| [e.n(), e.dim()]),
        embedding_coverage: ds.embeddings.as_ref().map(|e| e.coverage().to_vec()),
    };
    let emb = ds.embeddings.as_ref().map_or(&[][..], |e| e.values());
    encode_container(DATASET_MAGIC, &header, &[d.values(), emb])
}

pub fn decode_dataset(bytes: &[u8], path: &Path) -> Result<Dataset> {
    let (h, values, offset): (DatasetHeader, _, _) = decode_container(bytes, DATASET_MAGIC, path)?;
    let corrupt = |detail: String| Error::Corrupt { path: path.to_path_buf(), offset, detail };
    if h.version != FORMAT_VERSION {
        return Err(corrupt(format!("unsupported dataset version {}", h.version)));
    }
    let [t, n] = h.demand_shape;
    let demand_len = t * n;
    let emb_len = h.embedding_shape.map_or(0, |[r, d]| r * d);
    if values.len() != demand_len + emb_len {
        return Err(corrupt(format!(
            "payload holds {} values, header promises {} demand + {} embedding",
            values.len(),
            demand_len,
            emb_len
        )));
    }
    if n != h.region_ids.len() {
        return Err(corrupt(format!("{} region ids for {n} demand columns", h.region_ids.len())));
    }
    let mut values = values;
    let emb_values = values.split_off(demand_len);
    let demand = DemandMatrix::new(values, t, h.region_ids.clone(), h.t0, h.bin_seconds)?;
    let embeddings = match h.embedding_shape {
        Some([rows, dim]) => {
            if rows != n {
                return Err(corrupt(format!("{rows} embedding rows for {n} regions")));
            }
            let coverage = h.embedding_coverage.unwrap_or_else(|| vec![1; rows]);
            Some(EmbeddingTable::new(h.region_ids, dim, emb_values, coverage)?)
        }
        None => None,
    };
    Dataset::new(demand, embeddings)
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    write_file(path, &encode_dataset(ds)?)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    decode_dataset(&read_file(path)?, path)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

/// Trained parameters together with everything needed to reuse them.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub seed: u64,
    pub region_ids: Vec<String>,
    pub normalizer: Option<Normalizer>,
    pub split: SplitRatios,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    version: u32,
    arch: ArchConfig,
    seed: u64,
    manifest: Vec<ManifestEntry>,
    region_ids: Vec<String>,
    normalizer: Option<Normalizer>,
    split: SplitRatios,
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Result<Vec<u8>> {
    let p = &ck.params;
    let header = CheckpointHeader {
        format: "stgcn-checkpoint".into(),
        version: FORMAT_VERSION,
        arch: p.arch().clone(),
        seed: ck.seed,
        manifest: p
            .names()
            .iter()
            .zip(p.tensors())
            .map(|(name, t)| ManifestEntry { name: name.clone(), shape: t.shape().to_vec() })
            .collect(),
        region_ids: ck.region_ids.clone(),
        normalizer: ck.normalizer.clone(),
        split: ck.split,
    };
    let payload: Vec<&[f64]> = p.tensors().iter().map(Tensor::data).collect();
    encode_container(CHECKPOINT_MAGIC, &header, &payload)
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let (h, values, offset): (CheckpointHeader, _, _) = decode_container(bytes, CHECKPOINT_MAGIC, path)?;
    if h.version != FORMAT_VERSION {
        return Err(Error::Corrupt { path: path.to_path_buf(), offset, detail: format!("unsupported checkpoint version {}", h.version) });
    }
    h.arch.validate()?;
    let layout = h.arch.layout();
    if layout.len() != h.manifest.len() {
        return Err(Error::Validation(format!(
            "checkpoint lists {} parameters, architecture has {}",
            h.manifest.len(),
            layout.len()
        )));
    }
    for (spec, entry) in layout.iter().zip(&h.manifest) {
        if spec.name != entry.name || spec.shape != entry.shape {
            return Err(Error::Validation(format!(
                "checkpoint parameter {} {:?} does not match architecture parameter {} {:?}",
                entry.name, entry.shape, spec.name, spec.shape
            )));
        }
    }
    let total: usize = h.manifest.iter().map(|e| e.shape.iter().product::<usize>()).sum();
    if values.len() != total {
        return Err(Error::Corrupt {
            path: path.to_path_buf(),
            offset,
            detail: format!("payload holds {} values, manifest needs {total}", values.len()),
        });
    }
    let mut rest = values.as_slice();
    let mut tensors = Vec::with_capacity(h.manifest.len());
    for e in &h.manifest {
        let k: usize = e.shape.iter().product();
        let (head, tail) = rest.split_at(k);
        tensors.push(Tensor::new(e.shape.clone(), head.to_vec())?);
        rest = tail;
    }
    let params = ModelParams::from_tensors(&h.arch, tensors)?;
    if !params.all_finite() {
        return Err(Error::Validation("checkpoint contains non-finite parameters".into()));
    }
    Ok(Checkpoint { params, seed: h.seed, region_ids: h.region_ids, normalizer: h.normalizer, split: h.split })
}

pub fn write_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    write_file(path, &encode_checkpoint(ck)?)
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&read_file(path)?, path)
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    format: String,
    region_ids: Vec<String>,
    cutoff_km: f64,
    weight_mode: WeightMode,
    /// One row per region.
    adjacency: Vec<Vec<f64>>,
}

pub fn encode_graph(g: &TrafficGraph) -> Result<Vec<u8>> {
    let n = g.n();
    let file = GraphFile {
        format: "stgcn-graph".into(),
        region_ids: g.region_ids.clone(),
        cutoff_km: g.cutoff_km,
        weight_mode: g.weight_mode,
        adjacency: g.adjacency().chunks(n.max(1)).map(<[f64]>::to_vec).collect(),
    };
    let mut out = serde_json::to_vec_pretty(&file).map_err(|e| Error::Parse(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

pub fn decode_graph(bytes: &[u8], path: &Path) -> Result<TrafficGraph> {
    let file: GraphFile = serde_json::from_slice(bytes)
        .map_err(|e| Error::Parse(format!("{}: line {}: {e}", path.display(), e.line())))?;
    let n = file.region_ids.len();
    if file.adjacency.len() != n || file.adjacency.iter().any(|r| r.len() != n) {
        return Err(Error::Validation(format!("{}: adjacency is not {n}×{n}", path.display())));
    }
    TrafficGraph::from_adjacency(file.region_ids, file.adjacency.concat(), file.cutoff_km, file.weight_mode)
}

pub fn write_graph(path: &Path, g: &TrafficGraph) -> Result<()> {
    write_file(path, &encode_graph(g)?)
}

pub fn read_graph(path: &Path) -> Result<TrafficGraph> {
    decode_graph(&read_file(path)?, path)
}

#[cfg(test)]
mod tests;
