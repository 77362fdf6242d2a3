//! Run configuration: built-in defaults, overlaid by a TOML file, then by
//! `--set key=value` pairs, then by explicit command-line flags.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use stgcn_core::data::{NormMode, SplitRatios, SynthConfig};
use stgcn_core::embed::EmbedConfig;
use stgcn_core::graph::{WeightMode, DEFAULT_CUTOFF_KM};
use stgcn_core::model::ArchConfig;
use stgcn_core::train::TrainConfig;
use stgcn_core::{io, Error, Result};

pub const CONFIG_ECHO: &str = "config.toml";
pub const EVAL_CONFIG_ECHO: &str = "evaluate_config.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run_dir: PathBuf,
    pub paths: Paths,
    pub data: DataSettings,
    pub graph: GraphSettings,
    pub model: ArchConfig,
    pub train: TrainConfig,
    pub embed: EmbedConfig,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            run_dir: PathBuf::from("runs/latest"),
            paths: Paths::default(),
            data: DataSettings::default(),
            graph: GraphSettings::default(),
            model: ArchConfig::default(),
            train: TrainConfig::default(),
            embed: EmbedConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

/// Input locations. None of these has a default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub trips: Option<PathBuf>,
    pub regions: Option<PathBuf>,
    pub pois: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Embedding cache; defaults to `embed_cache.jsonl` in the run directory.
    pub cache: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSettings {
    pub t_start: Option<DateTime<Utc>>,
    pub t_end: Option<DateTime<Utc>>,
    pub bin_minutes: u32,
    pub split: SplitRatios,
    pub normalization: NormMode,
}

impl Default for DataSettings {
    fn default() -> Self {
        DataSettings {
            t_start: None,
            t_end: None,
            bin_minutes: 60,
            split: SplitRatios::default(),
            normalization: NormMode::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSettings {
    pub cutoff_km: f64,
    pub weight_mode: WeightMode,
}

impl Default for GraphSettings {
    fn default() -> Self {
        GraphSettings { cutoff_km: DEFAULT_CUTOFF_KM, weight_mode: WeightMode::default() }
    }
}

impl RunConfig {
    /// Reads `file` (if any) and applies `sets` on top of it.
    pub fn load(file: Option<&Path>, sets: &[String]) -> Result<RunConfig> {
        let mut table = match file {
            Some(path) => {
                let bytes = io::read_file(path)?;
                let text = String::from_utf8(bytes)
                    .map_err(|_| Error::Validation(format!("config {}: not UTF-8", path.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| Error::Validation(format!("config {}: {e}", path.display())))?
            }
            None => toml::Table::new(),
        };
        for s in sets {
            apply_set(&mut table, s)?;
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Validation(format!("config: {}", e.message())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Validation(format!("config cannot be serialised: {e}")))
    }

    /// Writes the effective configuration into the run directory.
    pub fn echo(&self, file_name: &str) -> Result<PathBuf> {
        let path = self.run_dir.join(file_name);
        io::write_file(&path, self.to_toml()?.as_bytes())?;
        Ok(path)
    }

    pub fn cache_path(&self) -> PathBuf {
        self.paths.cache.clone().unwrap_or_else(|| self.run_dir.join("embed_cache.jsonl"))
    }
}

/// Applies one `dotted.key=value` override. The value is read as a TOML
/// literal when it parses as one and as a bare string otherwise.
pub fn apply_set(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let bad = |why: &str| Error::Validation(format!("--set {assignment:?}: {why}"));
    let (key, raw) = assignment.split_once('=').ok_or_else(|| bad("expected key=value"))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(bad("empty key segment"));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));

    let (last, parents) = parts.split_last().expect("non-empty key");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| bad(&format!("{p} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml().unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn set_overrides_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[train]\nepochs = 7\nlearning_rate = 0.01\n[model]\nblock1 = [1, 8, 32]\n").unwrap();
        let cfg = RunConfig::load(
            Some(&path),
            &["train.epochs=3".into(), "model.kernel_size = 2".into(), "embed.model_name=foo-bar".into()],
        )
        .unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.learning_rate, 0.01);
        assert_eq!(cfg.model.block1, [1, 8, 32]);
        assert_eq!(cfg.model.kernel_size, 2);
        assert_eq!(cfg.embed.model_name, "foo-bar");
        assert_eq!(cfg.train.batch_size, TrainConfig::default().batch_size);
    }

    #[test]
    fn unknown_keys_and_bad_types_are_rejected() {
        for set in ["train.epoch=3", "nonsense=1", "model.horizon=\"x\"", "train", "train..x=1"] {
            let err = RunConfig::load(None, &[set.into()]).unwrap_err();
            assert_eq!(err.kind(), stgcn_core::ErrorKind::Validation, "{set}: {err}");
        }
    }

    #[test]
    fn missing_config_file_is_io() {
        let err = RunConfig::load(Some(Path::new("/nonexistent/run.toml")), &[]).unwrap_err();
        assert_eq!(err.kind(), stgcn_core::ErrorKind::Io);
        assert!(err.to_string().contains("/nonexistent/run.toml"));
    }

    #[test]
    fn span_and_paths_parse() {
        let cfg = RunConfig::load(
            None,
            &["data.t_start=2024-01-01T00:00:00Z".into(), "paths.dataset=/tmp/d.bin".into()],
        )
        .unwrap();
        assert_eq!(cfg.data.t_start.unwrap().to_rfc3339(), "2024-01-01T00:00:00+00:00");
        assert_eq!(cfg.paths.dataset.as_deref(), Some(Path::new("/tmp/d.bin")));
    }
}
