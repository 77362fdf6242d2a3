//! One function per subcommand. Each reads its inputs from the effective
//! [`RunConfig`], writes its outputs and returns a short report.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::Duration;
use serde::Serialize;
use stgcn_core::data::{
    aggregate_demand, filter_complete, load_regions, make_windows, pool_embeddings, prepare_windows, read_pois_jsonl,
    read_trips_csv, synth_generate, write_pois_jsonl, EmbeddingTable, PoiRecord, Split,
};
use stgcn_core::embed::{embed_texts, EmbedCache};
use stgcn_core::graph::{build_adjacency, gcn_normalize, LatLon, RegionSet, TrafficGraph};
use stgcn_core::io::{self, Checkpoint, Dataset};
use stgcn_core::model::GraphContext;
use stgcn_core::tensor::Tensor;
use stgcn_core::train::{evaluate, metrics, persistence_baseline, train_loop, Evaluation, Metrics, TrainHistory};
use stgcn_core::{Error, Result};

use crate::config::{RunConfig, CONFIG_ECHO, EVAL_CONFIG_ECHO};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const HISTORY_FILE: &str = "history.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const PER_NODE_FILE: &str = "per_node.csv";
pub const HORIZON_FILE: &str = "horizon.csv";
pub const CURVES_FILE: &str = "curves.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Stgcn,
    StgcnL,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Stgcn => "stgcn",
            ModelKind::StgcnL => "stgcn-l",
        }
    }
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| {
        Error::Validation(format!("missing input path: pass --{flag} or set paths.{flag}"))
    })
}

fn read_regions(cfg: &RunConfig) -> Result<RegionSet> {
    load_regions(&io::read_file(required(&cfg.paths.regions, "regions")?)?)
}

pub fn build_graph(cfg: &RunConfig, out: &Path) -> Result<String> {
    let regions = read_regions(cfg)?;
    let g = build_adjacency(&regions, cfg.graph.cutoff_km, cfg.graph.weight_mode)?;
    io::write_graph(out, &g)?;
    let n = g.n();
    let edges = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).filter(|&(i, j)| g.weight(i, j) != 0.0).count();
    Ok(format!("graph: {n} regions, {edges} edges within {} km -> {}", g.cutoff_km, out.display()))
}

/// Loads the embedding cache, embeds `texts` and persists any new vectors,
/// including those fetched before a failure.
fn embed_cached(cfg: &RunConfig, texts: &[String]) -> Result<(Vec<Vec<f64>>, usize)> {
    let path = cfg.cache_path();
    let mut cache = EmbedCache::load(&path)?;
    let before = cache.len();
    let res = embed_texts(texts, &cfg.embed, &mut cache);
    let fetched = cache.len() - before;
    cache.flush(&path)?;
    Ok((res?, fetched))
}

/// Fills in the `embedding` of every POI that only carries text.
fn complete_pois(cfg: &RunConfig, pois: &mut [PoiRecord]) -> Result<(usize, usize)> {
    let mut todo = Vec::new();
    for (i, p) in pois.iter().enumerate() {
        if p.embedding.is_none() {
            if p.text.as_deref().is_none_or(|t| t.trim().is_empty()) {
                return Err(Error::Validation(format!("POI {:?} has neither text nor embedding", p.id)));
            }
            todo.push(i);
        }
    }
    if todo.is_empty() {
        return Ok((0, 0));
    }
    let texts: Vec<String> = todo.iter().map(|&i| pois[i].text.clone().unwrap_or_default()).collect();
    let (vectors, fetched) = embed_cached(cfg, &texts)?;
    for (i, v) in todo.iter().zip(vectors) {
        pois[*i].embedding = Some(v);
    }
    Ok((texts.len(), fetched))
}

pub fn embed(cfg: &RunConfig, out: &Path) -> Result<String> {
    let mut pois = read_pois_jsonl(&io::read_file(required(&cfg.paths.pois, "pois")?)?)?;
    let (embedded, fetched) = complete_pois(cfg, &mut pois)?;
    io::write_file(out, &write_pois_jsonl(&pois))?;
    Ok(format!(
        "embed: {} POIs, {embedded} embedded ({} from cache, {fetched} fetched) -> {}",
        pois.len(),
        embedded - fetched,
        out.display()
    ))
}

fn region_embeddings(cfg: &RunConfig, regions: &RegionSet) -> Result<EmbeddingTable> {
    let path = cfg.paths.pois.as_deref().ok_or_else(|| {
        Error::Validation("prepare needs --pois (or paths.pois) unless --no-embeddings is given".into())
    })?;
    let mut pois = read_pois_jsonl(&io::read_file(path)?)?;
    complete_pois(cfg, &mut pois)?;
    let points: Vec<(LatLon, Vec<f64>)> = pois
        .into_iter()
        .map(|p| (LatLon::new(p.lat, p.lon), p.embedding.unwrap_or_default()))
        .collect();
    pool_embeddings(&points, regions)
}

pub fn prepare(cfg: &RunConfig, out: &Path, with_embeddings: bool) -> Result<String> {
    let (t_start, t_end) = match (cfg.data.t_start, cfg.data.t_end) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::Validation(
                "prepare needs an explicit span: --start/--end or data.t_start/data.t_end".into(),
            ))
        }
    };
    if cfg.data.bin_minutes == 0 {
        return Err(Error::Validation("data.bin_minutes must be positive".into()));
    }
    let regions = read_regions(cfg)?;
    let trips = read_trips_csv(&io::read_file(required(&cfg.paths.trips, "trips")?)?)?;
    let (demand, mut report) = aggregate_demand(
        &trips.records,
        &regions,
        t_start,
        t_end,
        Duration::minutes(cfg.data.bin_minutes.into()),
    )?;
    report.skipped = trips.skipped;
    let emb = if with_embeddings { Some(region_embeddings(cfg, &regions)?) } else { None };
    let complete = filter_complete(&demand, emb.as_ref(), &regions)?;
    if !complete.report.dropped.is_empty() {
        log::info!("dropped regions: {}", complete.report.dropped.join(", "));
    }
    let ds = Dataset::new(complete.demand, complete.embeddings)?;
    io::write_dataset(out, &ds)?;

    let mut msg = format!(
        "trips: {} counted, {} outside span, {} outside every region, {} unparseable\n",
        report.counted, report.out_of_span, report.unassigned, report.skipped
    );
    let _ = write!(
        msg,
        "regions: {} kept, {} dropped; {} time steps{} -> {}",
        complete.report.kept,
        complete.report.dropped.len(),
        ds.demand.t(),
        if ds.embeddings.is_some() { ", with embeddings" } else { "" },
        out.display()
    );
    Ok(msg)
}

pub fn synth(cfg: &RunConfig, out_dir: &Path, with_embeddings: bool) -> Result<String> {
    let data = synth_generate(&cfg.synth)?;
    let ds = Dataset::new(data.demand, with_embeddings.then_some(data.embeddings))?;
    io::write_dataset(&out_dir.join("dataset.bin"), &ds)?;
    io::write_graph(&out_dir.join("graph.json"), &data.graph)?;
    Ok(format!(
        "synth: {} nodes x {} steps (seed {}) -> {}",
        cfg.synth.n_nodes,
        cfg.synth.steps,
        cfg.synth.seed,
        out_dir.display()
    ))
}

fn load_pair(cfg: &RunConfig) -> Result<(Dataset, TrafficGraph)> {
    let ds = io::read_dataset(required(&cfg.paths.dataset, "dataset")?)?;
    let graph = io::read_graph(required(&cfg.paths.graph, "graph")?)?.select_ids(ds.region_ids())?;
    Ok((ds, graph))
}

pub struct TrainReport {
    pub kind: ModelKind,
    pub history: TrainHistory,
    pub checkpoint: PathBuf,
}

pub fn train(cfg: &mut RunConfig, kind: Option<ModelKind>) -> Result<TrainReport> {
    cfg.model.validate()?;
    cfg.train.validate()?;
    cfg.data.split.validate()?;
    let (ds, graph) = load_pair(cfg)?;
    let kind = kind.unwrap_or(if ds.embeddings.is_some() { ModelKind::StgcnL } else { ModelKind::Stgcn });
    cfg.model.use_llm_block = kind == ModelKind::StgcnL;
    let emb = match kind {
        ModelKind::Stgcn => None,
        ModelKind::StgcnL => {
            let e = ds.embeddings.as_ref().ok_or_else(|| {
                Error::Validation("stgcn-l needs a dataset with region embeddings".into())
            })?;
            if e.dim() != cfg.model.embedding_dim {
                log::info!("embedding_dim set to {} from the dataset", e.dim());
                cfg.model.embedding_dim = e.dim();
            }
            Some(e)
        }
    };
    let arch = cfg.model.clone();
    let (windows, norm) = prepare_windows(
        &ds.demand,
        arch.input_steps,
        arch.horizon,
        cfg.data.split,
        cfg.data.normalization,
    )?;
    let ctx = GraphContext::new(&gcn_normalize(&graph), emb)?;
    log::info!(
        "training {} on {} nodes, {} windows, {} parameters",
        kind.name(),
        windows.n(),
        windows.len(),
        arch.param_count()
    );
    let outcome = train_loop(&windows, &ctx, &arch, &cfg.train)?;

    let checkpoint = cfg.run_dir.join(CHECKPOINT_FILE);
    io::write_checkpoint(
        &checkpoint,
        &Checkpoint {
            params: outcome.params,
            seed: cfg.train.seed,
            region_ids: ds.region_ids().to_vec(),
            normalizer: Some(norm),
            split: cfg.data.split,
        },
    )?;
    io::write_file(&cfg.run_dir.join(HISTORY_FILE), outcome.history.to_csv().as_bytes())?;
    cfg.echo(CONFIG_ECHO)?;
    Ok(TrainReport { kind, history: outcome.history, checkpoint })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Scores {
    pub mse: f64,
    pub mae: f64,
}

impl From<Metrics> for Scores {
    fn from(m: Metrics) -> Self {
        Scores { mse: m.mse, mae: m.mae }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairScores {
    pub model: Scores,
    pub persistence: Scores,
}

/// Content of `metrics.json`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub split: String,
    pub model_kind: String,
    pub windows: usize,
    pub nodes: usize,
    pub horizon: usize,
    /// Mean per-window squared error summed over horizons and nodes.
    pub loss: f64,
    /// Scores on the normalised scale the model is trained on.
    pub normalized: PairScores,
    /// Scores in trip counts, after undoing normalisation.
    pub raw: PairScores,
}

fn parse_split(s: &str) -> Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        _ => Err(Error::Validation(format!("unknown split {s:?}; use train, val or test"))),
    }
}

fn per_node(pred: &[f64], target: &[f64], n: usize) -> Vec<Scores> {
    let rows = pred.len() / n;
    (0..n)
        .map(|j| {
            let (mut se, mut ae) = (0.0, 0.0);
            for r in 0..rows {
                let d = pred[r * n + j] - target[r * n + j];
                se += d * d;
                ae += d.abs();
            }
            Scores { mse: se / rows as f64, mae: ae / rows as f64 }
        })
        .collect()
}

fn per_step(pred: &[f64], target: &[f64], h: usize, n: usize) -> Vec<Scores> {
    let samples = pred.len() / (h * n);
    (0..h)
        .map(|k| {
            let (mut se, mut ae) = (0.0, 0.0);
            for s in 0..samples {
                for j in 0..n {
                    let i = (s * h + k) * n + j;
                    let d = pred[i] - target[i];
                    se += d * d;
                    ae += d.abs();
                }
            }
            let c = (samples * n) as f64;
            Scores { mse: se / c, mae: ae / c }
        })
        .collect()
}

fn denormalized(t: &Tensor, ck: &Checkpoint, n: usize) -> Result<Tensor> {
    let mut data = t.data().to_vec();
    if let Some(norm) = &ck.normalizer {
        norm.invert(&mut data, n);
    }
    Tensor::new(t.shape().to_vec(), data)
}

pub struct EvaluateReport {
    pub metrics: MetricsReport,
    pub model: Evaluation,
    pub persistence: Evaluation,
}

pub fn evaluate_cmd(cfg: &RunConfig, split: &str, history: Option<&Path>) -> Result<EvaluateReport> {
    let split_id = parse_split(split)?;
    let ck = io::read_checkpoint(required(&cfg.paths.checkpoint, "checkpoint")?)?;
    let (ds, graph) = load_pair(cfg)?;
    if ck.region_ids.len() != ds.region_ids().len() {
        return Err(Error::Validation(format!(
            "checkpoint was trained on {} nodes but the dataset has {}",
            ck.region_ids.len(),
            ds.region_ids().len()
        )));
    }
    if ck.region_ids != ds.region_ids() {
        return Err(Error::Validation("checkpoint and dataset list different region ids".into()));
    }
    let arch = ck.params.arch().clone();
    let emb = if arch.use_llm_block {
        let e = ds.embeddings.as_ref().ok_or_else(|| {
            Error::Validation("checkpoint uses the embedding block but the dataset has no embeddings".into())
        })?;
        if e.dim() != arch.embedding_dim {
            return Err(Error::Validation(format!(
                "checkpoint expects {}-dimensional embeddings, dataset has {}",
                arch.embedding_dim,
                e.dim()
            )));
        }
        Some(e)
    } else {
        None
    };
    let raw_windows = make_windows(&ds.demand, arch.input_steps, arch.horizon, ck.split)?;
    let n = raw_windows.n();
    let windows = match &ck.normalizer {
        Some(norm) => raw_windows.map_series(|s| norm.apply(s, n)),
        None => raw_windows,
    };
    let ctx = GraphContext::new(&gcn_normalize(&graph), emb)?;
    let model = evaluate(&ck.params, &windows, split_id, &ctx, cfg.train.batch_size)?;
    let base = persistence_baseline(&windows, split_id)?;

    let raw_target = denormalized(&model.targets, &ck, n)?;
    let raw_model = metrics(&denormalized(&model.predictions, &ck, n)?, &raw_target)?;
    let raw_base = metrics(&denormalized(&base.predictions, &ck, n)?, &raw_target)?;
    let report = MetricsReport {
        split: split.to_string(),
        model_kind: if arch.use_llm_block { "stgcn-l" } else { "stgcn" }.into(),
        windows: model.predictions.shape()[0],
        nodes: n,
        horizon: arch.horizon,
        loss: model.loss,
        normalized: PairScores { model: model.metrics.into(), persistence: base.metrics.into() },
        raw: PairScores { model: raw_model.into(), persistence: raw_base.into() },
    };

    let dir = &cfg.run_dir;
    let mut json = serde_json::to_string_pretty(&report).map_err(|e| Error::Parse(e.to_string()))?;
    json.push('\n');
    io::write_file(&dir.join(METRICS_FILE), json.as_bytes())?;

    let (p, b, t) = (model.predictions.data(), base.predictions.data(), model.targets.data());
    let mut csv = String::from("region_id,mse,mae,persistence_mse,persistence_mae\n");
    for (id, (m, q)) in ds.region_ids().iter().zip(per_node(p, t, n).into_iter().zip(per_node(b, t, n))) {
        let _ = writeln!(csv, "{id},{},{},{},{}", m.mse, m.mae, q.mse, q.mae);
    }
    io::write_file(&dir.join(PER_NODE_FILE), csv.as_bytes())?;

    let h = arch.horizon;
    let mut csv = String::from("step,mse,mae,persistence_mse,persistence_mae\n");
    for (k, (m, q)) in per_step(p, t, h, n).into_iter().zip(per_step(b, t, h, n)).enumerate() {
        let _ = writeln!(csv, "{},{},{},{},{}", k + 1, m.mse, m.mae, q.mse, q.mae);
    }
    io::write_file(&dir.join(HORIZON_FILE), csv.as_bytes())?;

    let default_history = dir.join(HISTORY_FILE);
    let history = history.or_else(|| default_history.exists().then_some(default_history.as_path()));
    match history {
        Some(path) => {
            let hist = TrainHistory::from_csv(&String::from_utf8_lossy(&io::read_file(path)?))?;
            io::write_file(&dir.join(CURVES_FILE), hist.to_csv().as_bytes())?;
        }
        None => log::info!("no training history found; {CURVES_FILE} not written"),
    }
    let mut echo = cfg.clone();
    echo.model = arch;
    echo.echo(EVAL_CONFIG_ECHO)?;
    Ok(EvaluateReport { metrics: report, model, persistence: base })
}
