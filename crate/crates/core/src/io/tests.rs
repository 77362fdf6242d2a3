use chrono::TimeZone;

use super::*;
use crate::data::NormMode;
use crate::graph::{build_adjacency, LatLon, RegionSet};

const GOLDEN: &[u8] = include_bytes!("../../tests/fixtures/golden_dataset.bin");

fn fixture() -> Dataset {
    let ids: Vec<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
    let t0 = Utc.with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap();
    let demand = DemandMatrix::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 3, ids.clone(), t0, 3600).unwrap();
    let emb = EmbeddingTable::new(ids, 2, vec![0.5, -0.25, 0.0, 0.0], vec![3, 0]).unwrap();
    Dataset::new(demand, Some(emb)).unwrap()
}

fn p() -> &'static Path {
    Path::new("mem.bin")
}

#[test]
fn dataset_matches_golden_bytes() {
    let bytes = encode_dataset(&fixture()).unwrap();
    assert_eq!(bytes, GOLDEN);

    assert_eq!(&bytes[..8], b"STGCNDS\0");
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let header: serde_json::Value = serde_json::from_slice(&bytes[16..16 + len]).unwrap();
    assert_eq!(header["format"], "stgcn-dataset");
    assert_eq!(header["t0"], "2019-01-01T00:00:00Z");
    assert_eq!(header["bin_seconds"], 3600);
    assert_eq!(header["region_ids"], serde_json::json!(["a", "b"]));
    assert_eq!(header["demand_shape"], serde_json::json!([3, 2]));
    assert_eq!(header["embedding_shape"], serde_json::json!([2, 2]));
    assert_eq!(header["embedding_coverage"], serde_json::json!([3, 0]));
    let payload: Vec<f64> = bytes[16 + len..].chunks(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    assert_eq!(payload, [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 0.5, -0.25, 0.0, 0.0]);
}

#[test]
fn dataset_round_trips() {
    let ds = fixture();
    assert_eq!(decode_dataset(&encode_dataset(&ds).unwrap(), p()).unwrap(), ds);
    let plain = Dataset::new(ds.demand.clone(), None).unwrap();
    let bytes = encode_dataset(&plain).unwrap();
    assert_eq!(decode_dataset(&bytes, p()).unwrap(), plain);
}

#[test]
fn dataset_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sub/ds.bin");
    write_dataset(&path, &fixture()).unwrap();
    assert_eq!(read_dataset(&path).unwrap(), fixture());
    let missing = dir.path().join("nope.bin");
    let err = read_dataset(&missing).unwrap_err();
    assert!(err.to_string().contains("nope.bin"), "{err}");
}

#[test]
fn corrupt_datasets_report_offsets() {
    let bytes = encode_dataset(&fixture()).unwrap();
    let truncated = &bytes[..bytes.len() - 8];
    assert!(matches!(decode_dataset(truncated, p()), Err(Error::Corrupt { .. })));
    let ragged = &bytes[..bytes.len() - 3];
    match decode_dataset(ragged, p()) {
        Err(Error::Corrupt { offset, .. }) => assert_eq!(offset as usize, ragged.len()),
        other => panic!("{other:?}"),
    }
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(matches!(decode_dataset(&bad_magic, p()), Err(Error::Corrupt { offset: 0, .. })));
    let mut long_header = bytes.clone();
    long_header[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
    assert!(matches!(decode_dataset(&long_header, p()), Err(Error::Corrupt { offset: 8, .. })));
    assert!(matches!(decode_dataset(&bytes[..10], p()), Err(Error::Corrupt { .. })));
    assert!(decode_checkpoint(&bytes, p()).is_err());
}

fn checkpoint() -> Checkpoint {
    let arch = ArchConfig { block1: [1, 2, 3], block2: [3, 2, 3], use_llm_block: true, embedding_dim: 4, fusion_channels: 2, ..ArchConfig::default() };
    Checkpoint {
        params: ModelParams::init(&arch, 42).unwrap(),
        seed: 42,
        region_ids: vec!["x".into(), "y".into()],
        normalizer: Some(Normalizer { mode: NormMode::ZscorePerNode, mean: vec![1.5, 2.5], std: vec![0.1, 3.0] }),
        split: SplitRatios::default(),
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let ck = checkpoint();
    let bytes = encode_checkpoint(&ck).unwrap();
    assert_eq!(&bytes[..8], b"STGCNCK1");
    let back = decode_checkpoint(&bytes, p()).unwrap();
    assert_eq!(back, ck);
    assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
}

fn rewrite_header(bytes: &[u8], f: impl FnOnce(&mut serde_json::Value)) -> Vec<u8> {
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let mut header: serde_json::Value = serde_json::from_slice(&bytes[16..16 + len]).unwrap();
    f(&mut header);
    let json = serde_json::to_vec(&header).unwrap();
    let mut out = bytes[..8].to_vec();
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&bytes[16 + len..]);
    out
}

#[test]
fn checkpoint_rejects_shape_mismatch() {
    let bytes = encode_checkpoint(&checkpoint()).unwrap();
    let swapped = rewrite_header(&bytes, |h| h["manifest"][0]["shape"] = serde_json::json!([4, 1, 2]));
    assert!(matches!(decode_checkpoint(&swapped, p()), Err(Error::Validation(_))));
    let other_arch = rewrite_header(&bytes, |h| h["arch"]["horizon"] = serde_json::json!(4));
    assert!(matches!(decode_checkpoint(&other_arch, p()), Err(Error::Validation(_))));
    let short = &bytes[..bytes.len() - 8];
    assert!(matches!(decode_checkpoint(short, p()), Err(Error::Corrupt { .. })));
    let bad_arch = rewrite_header(&bytes, |h| h["arch"]["input_steps"] = serde_json::json!(4));
    let msg = decode_checkpoint(&bad_arch, p()).unwrap_err().to_string();
    assert!(msg.contains("M − 4(K_t − 1) ≥ 1"), "{msg}");
}

#[test]
fn graph_round_trip() {
    let regions = RegionSet::from_centroids(&[LatLon::new(40.0, -75.0), LatLon::new(40.01, -75.0), LatLon::new(40.5, -75.0)]).unwrap();
    let g = build_adjacency(&regions, 20.0, WeightMode::InverseDistance).unwrap();
    let bytes = encode_graph(&g).unwrap();
    assert_eq!(decode_graph(&bytes, p()).unwrap(), g);
    let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
    v["adjacency"][0][1] = serde_json::json!(0.5);
    assert!(decode_graph(&serde_json::to_vec(&v).unwrap(), p()).is_err());
    v["adjacency"][0] = serde_json::json!([0.0]);
    assert!(decode_graph(&serde_json::to_vec(&v).unwrap(), p()).is_err());
    assert!(matches!(decode_graph(b"{", p()), Err(Error::Parse(_))));
}
