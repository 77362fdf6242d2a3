mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};
use common::*;
use sha2::{Digest, Sha256};
use stgcn_core::data::{filter_complete, prepare_windows, DemandMatrix, NormMode, Split, SplitRatios};
use stgcn_core::graph::{gcn_normalize, LatLon, Region, RegionSet, TrafficGraph, WeightMode};
use stgcn_core::io::{self, Checkpoint, Dataset};
use stgcn_core::model::{ArchConfig, GraphContext, ModelParams};
use stgcn_core::tensor::Tensor;
use stgcn_core::train::evaluate;

const PREPARE_GOLDEN_SHA256: &str = "f12da9e8694ce5a428c2864322727d02b279d249c8b88cbfb05a8e5e8b65bfb9";
const SECRET: &str = "sk-test-3f9a1c77e2b04d5c9e61aa0d";

fn synth(dir: &Path, nodes: usize, steps: usize, seed: u64, extra: &[&str]) {
    let mut args = vec![
        "synth".to_string(),
        "--nodes".into(),
        nodes.to_string(),
        "--steps".into(),
        steps.to_string(),
        "--seed".into(),
        seed.to_string(),
        "--out-dir".into(),
        p(dir),
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    stgcn(&args).ok();
}

#[test]
fn build_graph_matches_haversine_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let expected: serde_json::Value =
        serde_json::from_slice(&read(&fixture("regions3_expected.json"))).unwrap();
    for (cutoff, key) in [("160", "gaussian_160_10"), ("12", "gaussian_12_10")] {
        let out = dir.path().join(format!("g{cutoff}.json"));
        let r = stgcn(&[
            "build-graph",
            "--regions",
            &p(&fixture("regions3.geojson")),
            "--cutoff-km",
            cutoff,
            "--weight-mode",
            "gaussian-kernel",
            "--sigma-km",
            "10",
            "--out",
            &p(&out),
        ]);
        r.ok();
        let g = io::read_graph(&out).unwrap();
        assert_eq!(serde_json::json!(g.region_ids), expected["ids"]);
        let want: Vec<f64> = expected[key].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        assert_eq!(g.adjacency().len(), want.len());
        for (a, b) in g.adjacency().iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12, "{key}: {a} vs {b}");
        }
    }
    // the 12 km cutoff keeps exactly one edge
    let g = io::read_graph(&dir.path().join("g12.json")).unwrap();
    assert_eq!(g.adjacency().iter().filter(|&&w| w > 0.0).count(), 2);
}

#[test]
fn build_graph_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(&dir.path().join("g.json"));
    let missing = dir.path().join("nope/regions.geojson");
    let r = stgcn(&["build-graph", "--regions", &p(&missing), "--out", &out]);
    assert_eq!(r.code, 1, "{}", r.stderr);
    assert!(r.stderr.contains(&p(&missing)), "{}", r.stderr);

    let regions = p(&fixture("regions3.geojson"));
    let r = stgcn(&["build-graph", "--regions", &regions, "--cutoff-km", "0", "--out", &out]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert!(!Path::new(&out).exists());

    let r = stgcn(&["build-graph", "--out", &out]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("--regions"), "{}", r.stderr);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[graph]\ncutof_km = 3\n").unwrap();
    let r = stgcn(&["build-graph", "--config", &p(&bad), "--regions", &regions, "--out", &out]);
    assert_eq!(r.code, 2, "{}", r.stderr);
}

fn prepare_args(out: &Path) -> Vec<String> {
    [
        "prepare",
        "--trips",
        &p(&fixture("trips.csv")),
        "--regions",
        &p(&fixture("city.geojson")),
        "--start",
        "2024-01-01T00:00:00Z",
        "--end",
        "2024-01-01T06:00:00Z",
        "--out",
        &p(out),
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

#[test]
fn prepare_matches_golden_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ds.bin");
    let mut args = prepare_args(&out);
    args.extend(["--pois".into(), p(&fixture("pois_embedded.jsonl")), "--offline".into()]);
    let r = stgcn(&args);
    r.ok();
    assert!(r.stdout.contains("12 counted, 2 outside span, 1 outside every region, 1 unparseable"), "{}", r.stdout);
    assert!(r.stdout.contains("regions: 2 kept, 2 dropped"), "{}", r.stdout);
    let digest = hex::encode(Sha256::digest(read(&out)));
    assert_eq!(digest, PREPARE_GOLDEN_SHA256);

    // idempotent
    stgcn(&args).ok();
    assert_eq!(hex::encode(Sha256::digest(read(&out))), PREPARE_GOLDEN_SHA256);
}

#[test]
fn prepare_without_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ds.bin");
    let mut args = prepare_args(&out);
    args.push("--no-embeddings".into());
    let r = stgcn(&args);
    r.ok();
    assert!(r.stdout.contains("regions: 3 kept, 1 dropped"), "{}", r.stdout);
    let ds = io::read_dataset(&out).unwrap();
    assert!(ds.embeddings.is_none());
    assert_eq!(ds.region_ids(), ["a", "b", "c"]);
    assert_eq!(ds.demand.t(), 6);
    let col = |r: usize| (0..6).map(|t| ds.demand.get(t, r)).collect::<Vec<_>>();
    assert_eq!(col(0), [2.0, 1.0, 1.0, 1.0, 0.0, 1.0]);
    assert_eq!(col(2), [0.0, 1.0, 0.0, 0.0, 1.0, 0.0]);
}

#[test]
fn prepare_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ds.bin");

    // no trips inside the span leaves nothing
    let mut args = prepare_args(&out);
    args[6] = "2025-01-01T00:00:00Z".into();
    args[8] = "2025-01-02T00:00:00Z".into();
    args.push("--no-embeddings".into());
    let r = stgcn(&args);
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert!(r.stderr.contains("empty dataset"), "{}", r.stderr);
    assert!(!out.exists());

    // neither POIs nor --no-embeddings
    let r = stgcn(&prepare_args(&out));
    assert_eq!(r.code, 2, "{}", r.stderr);

    // span is required
    let r = stgcn(&[
        "prepare",
        "--trips",
        &p(&fixture("trips.csv")),
        "--regions",
        &p(&fixture("city.geojson")),
        "--no-embeddings",
        "--out",
        &p(&out),
    ]);
    assert_eq!(r.code, 2, "{}", r.stderr);
}

#[test]
fn prepare_matches_region_ids_not_order() {
    let dir = tempfile::tempdir().unwrap();
    let trips = dir.path().join("trips.csv");
    std::fs::write(
        &trips,
        "start_time,region_id\n2024-01-01T00:10:00Z,d\n2024-01-01T00:20:00Z,b\n2024-01-01T01:20:00Z,d\n2024-01-01T01:30:00Z,zz\n",
    )
    .unwrap();
    let out = dir.path().join("ds.bin");
    let r = stgcn(&[
        "prepare",
        "--trips",
        &p(&trips),
        "--regions",
        &p(&fixture("city.geojson")),
        "--start",
        "2024-01-01T00:00:00Z",
        "--end",
        "2024-01-01T02:00:00Z",
        "--no-embeddings",
        "--out",
        &p(&out),
    ]);
    r.ok();
    assert!(r.stdout.contains("1 outside every region"), "{}", r.stdout);
    let ds = io::read_dataset(&out).unwrap();
    assert_eq!(ds.region_ids(), ["b", "d"]);
    assert_eq!(ds.demand.values(), [1.0, 1.0, 0.0, 1.0]);
}

fn warm_cache(dir: &Path) -> std::path::PathBuf {
    let cache = dir.join("cache.jsonl");
    std::fs::copy(fixture("warm_cache.jsonl"), &cache).unwrap();
    cache
}

#[test]
fn embed_offline_with_warm_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cache = warm_cache(dir.path());
    let before = read(&cache);
    let out = dir.path().join("pois.jsonl");
    let r = stgcn(&[
        "embed",
        "--pois",
        &p(&fixture("pois_text.jsonl")),
        "--cache",
        &p(&cache),
        "--offline",
        "--set",
        "embed.dim=3",
        "--set",
        "embed.endpoint_url=http://127.0.0.1:9/unreachable",
        "--out",
        &p(&out),
    ]);
    r.ok();
    assert!(r.stdout.contains("4 embedded (4 from cache, 0 fetched)"), "{}", r.stdout);
    assert_eq!(read(&cache), before);
    let pois = stgcn_core::data::read_pois_jsonl(&read(&out)).unwrap();
    assert_eq!(pois.len(), 4);
    for poi in &pois {
        assert_eq!(poi.embedding.as_deref().unwrap(), stub_vector(poi.text.as_deref().unwrap()).as_slice());
    }
}

#[test]
fn embed_offline_miss_exits_3_with_count() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("empty.jsonl");
    let out = dir.path().join("pois.jsonl");
    let r = stgcn(&[
        "embed",
        "--pois",
        &p(&fixture("pois_text.jsonl")),
        "--cache",
        &p(&cache),
        "--offline",
        "--out",
        &p(&out),
    ]);
    assert_eq!(r.code, 3, "{}", r.stderr);
    assert!(r.stderr.contains("4 text(s) missing"), "{}", r.stderr);
    assert!(!out.exists());
}

#[test]
fn embed_against_stub_endpoint() {
    let stub = StubServer::start(false);
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache.jsonl");
    let out = dir.path().join("pois.jsonl");
    let args = [
        "embed".to_string(),
        "--pois".into(),
        p(&fixture("pois_text.jsonl")),
        "--cache".into(),
        p(&cache),
        "--set".into(),
        "embed.dim=3".into(),
        "--set".into(),
        format!("embed.endpoint_url={:?}", stub.url),
        "--out".into(),
        p(&out),
    ];
    let r = stgcn_env(&args, &[("OPENAI_API_KEY", SECRET)]);
    r.ok();
    assert!(r.stdout.contains("0 from cache, 4 fetched"), "{}", r.stdout);
    let pois = stgcn_core::data::read_pois_jsonl(&read(&out)).unwrap();
    for poi in &pois {
        assert_eq!(poi.embedding.as_deref().unwrap(), stub_vector(poi.text.as_deref().unwrap()).as_slice());
    }
    // the written cache matches the independently generated warm cache
    let mut got: Vec<String> = String::from_utf8(read(&cache)).unwrap().lines().map(String::from).collect();
    let mut want: Vec<String> =
        String::from_utf8(read(&fixture("warm_cache.jsonl"))).unwrap().lines().map(String::from).collect();
    got.sort();
    want.sort();
    assert_eq!(got, want);

    // a second run is served from the cache
    let calls = stub.request_count();
    let r = stgcn_env(&args, &[("OPENAI_API_KEY", SECRET)]);
    r.ok();
    assert_eq!(stub.request_count(), calls);
}

#[test]
fn embed_bad_endpoint_exits_1_and_never_leaks_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache.jsonl");
    let out = dir.path().join("pois.jsonl");
    let stub = StubServer::start(true);
    for url in ["http://127.0.0.1:1/v1/embeddings".to_string(), stub.url.clone()] {
        let t0 = Instant::now();
        let r = stgcn_env(
            &[
                "embed".to_string(),
                "-vv".into(),
                "--pois".into(),
                p(&fixture("pois_text.jsonl")),
                "--cache".into(),
                p(&cache),
                "--set".into(),
                format!("embed.endpoint_url={url:?}"),
                "--set".into(),
                "embed.max_retries=2".into(),
                "--set".into(),
                "embed.retry_backoff_s=0.01".into(),
                "--set".into(),
                "embed.timeout_s=5".into(),
                "--out".into(),
                p(&out),
            ],
            &[("OPENAI_API_KEY", SECRET)],
        );
        assert_eq!(r.code, 1, "{url}: {}", r.stderr);
        assert!(t0.elapsed() < Duration::from_secs(30));
        assert!(!r.stderr.contains(SECRET) && !r.stdout.contains(SECRET), "{}", r.stderr);
        assert!(!r.stderr.contains(&SECRET[8..]));
        assert!(!out.exists());
    }
    assert_eq!(stub.request_count(), 3, "one try plus two retries");
    if cache.exists() {
        assert!(!String::from_utf8_lossy(&read(&cache)).contains(SECRET));
    }

    // missing key names the variable, not a value
    let r = stgcn(&["embed", "--pois", &p(&fixture("pois_text.jsonl")), "--cache", &p(&cache), "--out", &p(&out)]);
    assert_ne!(r.code, 0);
    assert!(r.stderr.contains("OPENAI_API_KEY"), "{}", r.stderr);
}

#[test]
fn prepare_text_pois_through_warm_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cache = warm_cache(dir.path());
    let out = dir.path().join("ds.bin");
    let mut args = prepare_args(&out);
    args.extend([
        "--pois".into(),
        p(&fixture("pois_text.jsonl")),
        "--cache".into(),
        p(&cache),
        "--offline".into(),
        "--set".into(),
        "embed.dim=3".into(),
    ]);
    stgcn(&args).ok();
    let ds = io::read_dataset(&out).unwrap();
    let e = ds.embeddings.unwrap();
    assert_eq!(e.region_ids(), ["a", "b"]);
    let want = [[18.0, 1.075, -0.5], [13.0, 1.16, -0.5]];
    for (r, w) in want.iter().enumerate() {
        for (a, b) in e.row(r).iter().zip(w) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
    assert_eq!(e.coverage(), [2, 1]);
}

#[test]
fn synth_is_deterministic_and_accepts_two_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    synth(&a, 5, 128, 9, &[]);
    synth(&b, 5, 128, 9, &[]);
    synth(&c, 5, 128, 10, &[]);
    for f in ["dataset.bin", "graph.json"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
    }
    assert_ne!(read(&a.join("dataset.bin")), read(&c.join("dataset.bin")));

    let two = dir.path().join("two");
    synth(&two, 2, 64, 0, &[]);
    let ds = io::read_dataset(&two.join("dataset.bin")).unwrap();
    assert_eq!(ds.region_ids().len(), 2);

    let r = stgcn(&["synth", "--nodes", "1", "--out-dir", &p(&dir.path().join("one"))]);
    assert_eq!(r.code, 2);
}

#[test]
fn synth_output_passes_prepare_validation() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 6, 256, 4, &["--process", "seasonal-plus-noise"]);
    let ds = io::read_dataset(&dir.path().join("dataset.bin")).unwrap();
    let graph = io::read_graph(&dir.path().join("graph.json")).unwrap();
    assert_eq!(graph.select_ids(ds.region_ids()).unwrap().region_ids, ds.region_ids());
    let regions = RegionSet::new(
        ds.region_ids()
            .iter()
            .enumerate()
            .map(|(i, id)| Region { id: id.clone(), centroid: LatLon::new(40.0, -75.0 + i as f64 * 0.01), rings: vec![] })
            .collect(),
    )
    .unwrap();
    let done = filter_complete(&ds.demand, ds.embeddings.as_ref(), &regions).unwrap();
    assert_eq!(done.report.kept, 6);
    assert!(done.report.dropped.is_empty());
    assert!(ds.demand.values().iter().all(|v| v.is_finite() && *v >= 0.0));
}

#[test]
fn train_rejects_too_short_input_window() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 4, 128, 0, &[]);
    let r = stgcn(&[
        "train",
        "--dataset",
        &p(&dir.path().join("dataset.bin")),
        "--graph",
        &p(&dir.path().join("graph.json")),
        "--run-dir",
        &p(&dir.path().join("run")),
        "--set",
        "model.input_steps=4",
    ]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert!(r.stderr.contains("M − 4(K_t − 1) ≥ 1"), "{}", r.stderr);
    assert!(!dir.path().join("run/checkpoint.bin").exists());

    // stgcn-l without embeddings
    let plain = dir.path().join("plain");
    synth(&plain, 4, 128, 0, &["--no-embeddings"]);
    let r = stgcn(&[
        "train",
        "--dataset",
        &p(&plain.join("dataset.bin")),
        "--graph",
        &p(&plain.join("graph.json")),
        "--run-dir",
        &p(&dir.path().join("run")),
        "--model",
        "stgcn-l",
    ]);
    assert_eq!(r.code, 2, "{}", r.stderr);
}

fn train_args(data: &Path, run: &Path, extra: &[&str]) -> Vec<String> {
    let mut a: Vec<String> = vec![
        "train".into(),
        "--dataset".into(),
        p(&data.join("dataset.bin")),
        "--graph".into(),
        p(&data.join("graph.json")),
        "--run-dir".into(),
        p(run),
    ];
    a.extend(extra.iter().map(|s| s.to_string()));
    a
}

fn evaluate_args(data: &Path, run: &Path) -> Vec<String> {
    vec![
        "evaluate".into(),
        "--checkpoint".into(),
        p(&run.join("checkpoint.bin")),
        "--dataset".into(),
        p(&data.join("dataset.bin")),
        "--graph".into(),
        p(&data.join("graph.json")),
        "--run-dir".into(),
        p(run),
    ]
}

#[test]
fn quick_run_trains_evaluates_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, 8, 512, 1, &[]);
    let (r1, r2) = (dir.path().join("r1"), dir.path().join("r2"));

    let t0 = Instant::now();
    let r = stgcn(&train_args(&data, &r1, &["--epochs", "5", "--seed", "7"]));
    r.ok();
    assert!(t0.elapsed() < Duration::from_secs(120), "quick run took {:?}", t0.elapsed());
    assert!(r.stdout.contains("stgcn-l for 5 epoch(s)"), "{}", r.stdout);
    stgcn(&train_args(&data, &r2, &["--epochs", "5", "--seed", "7"])).ok();
    for f in ["history.csv", "checkpoint.bin"] {
        assert_eq!(read(&r1.join(f)), read(&r2.join(f)), "{f} differs between identical runs");
    }
    let echoed = String::from_utf8(read(&r1.join("config.toml"))).unwrap();
    assert!(echoed.contains("epochs = 5") && echoed.contains("seed = 7") && echoed.contains("use_llm_block = true"));

    // the echoed config reproduces the run on its own
    let r3 = dir.path().join("r3");
    stgcn(&["train".to_string(), "--config".into(), p(&r1.join("config.toml")), "--run-dir".into(), p(&r3)]).ok();
    assert_eq!(read(&r1.join("checkpoint.bin")), read(&r3.join("checkpoint.bin")));

    // evaluation output equals a direct library evaluation
    let r = stgcn(&evaluate_args(&data, &r1));
    r.ok();
    assert!(r.stdout.contains("persistence"), "{}", r.stdout);
    let m: serde_json::Value = serde_json::from_slice(&read(&r1.join("metrics.json"))).unwrap();
    let ck = io::read_checkpoint(&r1.join("checkpoint.bin")).unwrap();
    let ds = io::read_dataset(&data.join("dataset.bin")).unwrap();
    let graph = io::read_graph(&data.join("graph.json")).unwrap();
    let arch = ck.params.arch().clone();
    let (w, norm) = prepare_windows(&ds.demand, arch.input_steps, arch.horizon, SplitRatios::default(), NormMode::default()).unwrap();
    assert_eq!(Some(&norm), ck.normalizer.as_ref());
    let ctx = GraphContext::new(&gcn_normalize(&graph), ds.embeddings.as_ref()).unwrap();
    let e = evaluate(&ck.params, &w, Split::Test, &ctx, 50).unwrap();
    assert_eq!(m["normalized"]["model"]["mse"].as_f64().unwrap(), e.metrics.mse);
    assert_eq!(m["normalized"]["model"]["mae"].as_f64().unwrap(), e.metrics.mae);
    assert_eq!(m["loss"].as_f64().unwrap(), e.loss);
    assert_eq!(m["windows"], e.predictions.shape()[0]);

    let per_node = String::from_utf8(read(&r1.join("per_node.csv"))).unwrap();
    assert_eq!(per_node.lines().count(), 9);
    let curves = String::from_utf8(read(&r1.join("curves.csv"))).unwrap();
    assert_eq!(curves, String::from_utf8(read(&r1.join("history.csv"))).unwrap());
    assert_eq!(String::from_utf8(read(&r1.join("horizon.csv"))).unwrap().lines().count(), 4);

    // mismatched node count
    let small = dir.path().join("small");
    synth(&small, 4, 128, 1, &[]);
    let r = stgcn(&evaluate_args(&small, &r1));
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert!(r.stderr.contains("8 nodes"), "{}", r.stderr);

    // embedding block without embeddings
    let plain = dir.path().join("plain");
    synth(&plain, 8, 512, 1, &["--no-embeddings"]);
    let r = stgcn(&evaluate_args(&plain, &r1));
    assert_eq!(r.code, 2, "{}", r.stderr);

    // truncated checkpoint
    let ck_bytes = read(&r1.join("checkpoint.bin"));
    std::fs::write(r1.join("checkpoint.bin"), &ck_bytes[..ck_bytes.len() - 8]).unwrap();
    let r = stgcn(&evaluate_args(&data, &r1));
    assert_eq!(r.code, 2, "{}", r.stderr);
}

#[test]
fn evaluate_oracle_checkpoint_scores_zero() {
    let dir = tempfile::tempdir().unwrap();
    let ids: Vec<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
    let t0 = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
    let demand = DemandMatrix::new(vec![4.0; 40 * 3], 40, ids.clone(), t0, 3600).unwrap();
    let graph = TrafficGraph::from_adjacency(
        ids.clone(),
        vec![0.0, 0.5, 0.0, 0.5, 0.0, 0.2, 0.0, 0.2, 0.0],
        10.0,
        WeightMode::default(),
    )
    .unwrap();
    let arch = ArchConfig { block1: [1, 4, 8], block2: [8, 4, 8], ..ArchConfig::default() };
    let zeros: Vec<Tensor> = arch.layout().iter().map(|s| Tensor::zeros(&s.shape)).collect();
    let params = ModelParams::from_tensors(&arch, zeros).unwrap();
    let (_, norm) = prepare_windows(&demand, 12, 3, SplitRatios::default(), NormMode::ZscorePerNode).unwrap();
    io::write_dataset(&dir.path().join("dataset.bin"), &Dataset::new(demand, None).unwrap()).unwrap();
    io::write_graph(&dir.path().join("graph.json"), &graph).unwrap();
    let run = dir.path().join("run");
    io::write_checkpoint(
        &run.join("checkpoint.bin"),
        &Checkpoint { params, seed: 0, region_ids: ids, normalizer: Some(norm), split: SplitRatios::default() },
    )
    .unwrap();
    stgcn(&evaluate_args(dir.path(), &run)).ok();
    let m: serde_json::Value = serde_json::from_slice(&read(&run.join("metrics.json"))).unwrap();
    for scale in ["normalized", "raw"] {
        for who in ["model", "persistence"] {
            for k in ["mse", "mae"] {
                assert_eq!(m[scale][who][k].as_f64().unwrap(), 0.0, "{scale}.{who}.{k}");
            }
        }
    }
    assert!(!run.join("curves.csv").exists());
}

#[test]
fn unknown_subcommand_and_bad_flag_values_fail() {
    let r = stgcn(&["frobnicate"]);
    assert_eq!(r.code, 2);
    let r = stgcn(&["synth", "--nodes", "many", "--out-dir", "/tmp/x"]);
    assert_eq!(r.code, 2);
}
