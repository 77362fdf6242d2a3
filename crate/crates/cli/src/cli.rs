use std::path::PathBuf;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use stgcn_core::data::SynthProcess;
use stgcn_core::graph::{WeightMode, DEFAULT_SIGMA_KM};
use stgcn_core::{Error, ErrorKind, Result};

use crate::commands::{self, ModelKind};
use crate::config::RunConfig;

/// Spatio-temporal graph convolutional forecasting of bike-share demand.
#[derive(Debug, Parser)]
#[command(name = "stgcn", version)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set train.epochs=5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Seed for training and synthetic data.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for checkpoints, histories, metrics and the config echo.
    #[arg(long, global = true, value_name = "PATH")]
    pub run_dir: Option<PathBuf>,
    /// Never contact the embedding service; cache misses are an error.
    #[arg(long, global = true)]
    pub offline: bool,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the distance-weighted region graph from a GeoJSON file.
    BuildGraph(BuildGraphArgs),
    /// Aggregate trips into a demand matrix, pool POI embeddings and write a dataset.
    Prepare(PrepareArgs),
    /// Attach embedding vectors to a POI JSON Lines file.
    Embed(EmbedArgs),
    /// Train a model and write checkpoint, history and config into the run directory.
    Train(TrainArgs),
    /// Score a checkpoint against the model and persistence baselines.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic dataset and graph.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WeightModeArg {
    GaussianKernel,
    InverseDistance,
    RawDistance,
}

#[derive(Debug, Args)]
pub struct BuildGraphArgs {
    #[arg(long)]
    pub regions: Option<PathBuf>,
    #[arg(long)]
    pub cutoff_km: Option<f64>,
    #[arg(long, value_enum)]
    pub weight_mode: Option<WeightModeArg>,
    /// Kernel width for the gaussian-kernel weight mode.
    #[arg(long)]
    pub sigma_km: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[arg(long)]
    pub trips: Option<PathBuf>,
    #[arg(long)]
    pub regions: Option<PathBuf>,
    /// POI JSON Lines with text and/or embedding fields.
    #[arg(long)]
    pub pois: Option<PathBuf>,
    /// Write a demand-only dataset.
    #[arg(long)]
    pub no_embeddings: bool,
    /// Embedding cache file.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Inclusive span start (RFC 3339).
    #[arg(long)]
    pub start: Option<DateTime<Utc>>,
    /// Exclusive span end (RFC 3339).
    #[arg(long)]
    pub end: Option<DateTime<Utc>>,
    #[arg(long)]
    pub bin_minutes: Option<u32>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub pois: Option<PathBuf>,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelArg {
    Stgcn,
    #[value(name = "stgcn-l")]
    StgcnL,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Defaults to stgcn-l when the dataset carries embeddings.
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long, default_value = "test", value_parser = ["train", "val", "test"])]
    pub split: String,
    /// Training history to copy into curves.csv; defaults to the run directory's.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProcessArg {
    Diffusion,
    SeasonalPlusNoise,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, value_enum)]
    pub process: Option<ProcessArg>,
    /// Give every node the same bias so embeddings carry no information.
    #[arg(long)]
    pub no_signal: bool,
    /// Leave embeddings out of the dataset.
    #[arg(long)]
    pub no_embeddings: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, v: &Option<PathBuf>) {
    if v.is_some() {
        slot.clone_from(v);
    }
}

/// Effective configuration: defaults, file, `--set`, then explicit flags.
pub fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref(), &cli.sets)?;
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
        cfg.synth.seed = seed;
    }
    set(&mut cfg.run_dir, cli.run_dir.clone());
    cfg.embed.offline |= cli.offline;

    let p = &mut cfg.paths;
    match &cli.command {
        Command::BuildGraph(a) => {
            set_path(&mut p.regions, &a.regions);
            set(&mut cfg.graph.cutoff_km, a.cutoff_km);
            let sigma = match cfg.graph.weight_mode {
                WeightMode::GaussianKernel { sigma_km } => sigma_km,
                _ => DEFAULT_SIGMA_KM,
            };
            let sigma_km = a.sigma_km.unwrap_or(sigma);
            cfg.graph.weight_mode = match a.weight_mode {
                Some(WeightModeArg::GaussianKernel) => WeightMode::GaussianKernel { sigma_km },
                Some(WeightModeArg::InverseDistance) => WeightMode::InverseDistance,
                Some(WeightModeArg::RawDistance) => WeightMode::RawDistance,
                None => match cfg.graph.weight_mode {
                    WeightMode::GaussianKernel { .. } => WeightMode::GaussianKernel { sigma_km },
                    other => other,
                },
            };
        }
        Command::Prepare(a) => {
            set_path(&mut p.trips, &a.trips);
            set_path(&mut p.regions, &a.regions);
            set_path(&mut p.pois, &a.pois);
            set_path(&mut p.cache, &a.cache);
            if a.start.is_some() {
                cfg.data.t_start = a.start;
            }
            if a.end.is_some() {
                cfg.data.t_end = a.end;
            }
            set(&mut cfg.data.bin_minutes, a.bin_minutes);
        }
        Command::Embed(a) => {
            set_path(&mut p.pois, &a.pois);
            set_path(&mut p.cache, &a.cache);
        }
        Command::Train(a) => {
            set_path(&mut p.dataset, &a.dataset);
            set_path(&mut p.graph, &a.graph);
            set(&mut cfg.train.epochs, a.epochs);
        }
        Command::Evaluate(a) => {
            set_path(&mut p.checkpoint, &a.checkpoint);
            set_path(&mut p.dataset, &a.dataset);
            set_path(&mut p.graph, &a.graph);
        }
        Command::Synth(a) => {
            set(&mut cfg.synth.n_nodes, a.nodes);
            set(&mut cfg.synth.steps, a.steps);
            set(
                &mut cfg.synth.process,
                a.process.map(|p| match p {
                    ProcessArg::Diffusion => SynthProcess::Diffusion,
                    ProcessArg::SeasonalPlusNoise => SynthProcess::SeasonalPlusNoise,
                }),
            );
            if a.no_signal {
                cfg.synth.embedding_signal = false;
            }
        }
    }
    Ok(cfg)
}

/// Runs the parsed command and returns the lines to print on success.
pub fn run(cli: &Cli) -> Result<String> {
    let mut cfg = effective_config(cli)?;
    match &cli.command {
        Command::BuildGraph(a) => commands::build_graph(&cfg, &a.out),
        Command::Prepare(a) => commands::prepare(&cfg, &a.out, !a.no_embeddings),
        Command::Embed(a) => commands::embed(&cfg, &a.out),
        Command::Synth(a) => commands::synth(&cfg, &a.out_dir, !a.no_embeddings),
        Command::Train(a) => {
            let kind = a.model.map(|m| match m {
                ModelArg::Stgcn => ModelKind::Stgcn,
                ModelArg::StgcnL => ModelKind::StgcnL,
            });
            let r = commands::train(&mut cfg, kind)?;
            let h = &r.history;
            let best = h.best().ok_or_else(|| Error::State("training produced no epochs".into()))?;
            Ok(format!(
                "train: {} for {} epoch(s){}; best epoch {} val_mse {:.6} val_mae {:.6} -> {}",
                r.kind.name(),
                h.len(),
                if h.stopped_early { " (stopped early)" } else { "" },
                best.epoch,
                best.val_mse,
                best.val_mae,
                r.checkpoint.display()
            ))
        }
        Command::Evaluate(a) => {
            let r = commands::evaluate_cmd(&cfg, &a.split, a.history.as_deref())?.metrics;
            Ok(format!(
                "evaluate ({}, {} split, {} windows)\n  model:       mse {:.6} mae {:.6} (raw mse {:.4} mae {:.4})\n  persistence: mse {:.6} mae {:.6} (raw mse {:.4} mae {:.4})",
                r.model_kind,
                r.split,
                r.windows,
                r.normalized.model.mse,
                r.normalized.model.mae,
                r.raw.model.mse,
                r.raw.model.mae,
                r.normalized.persistence.mse,
                r.normalized.persistence.mae,
                r.raw.persistence.mse,
                r.raw.persistence.mae,
            ))
        }
    }
}

pub fn exit_code(err: &Error) -> u8 {
    match err.kind() {
        ErrorKind::Io => 1,
        ErrorKind::Validation => 2,
        ErrorKind::OfflineMiss => 3,
    }
}
