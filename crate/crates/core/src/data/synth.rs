use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DemandMatrix, EmbeddingTable};
use crate::error::{Error, Result};
use crate::graph::{build_adjacency, gcn_normalize, LatLon, RegionSet, TrafficGraph, WeightMode};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthProcess {
    /// `x_{t+1} = max(0, α·Â·x_t + b + a·sin(2π(t+1)/P) + σ·ε)`
    #[default]
    Diffusion,
    /// `x_t = max(0, b + a·sin(2πt/P) + σ·ε)`
    SeasonalPlusNoise,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_nodes: usize,
    pub steps: usize,
    pub seed: u64,
    pub process: SynthProcess,
    /// Make each node's bias a linear function of its embedding. Otherwise
    /// every node shares the same bias and embeddings carry no information.
    pub embedding_signal: bool,
    pub embedding_dim: usize,
    pub alpha: f64,
    pub noise_std: f64,
    pub amplitude: f64,
    pub period: f64,
    pub bias_base: f64,
    pub bias_spread: f64,
    pub sigma_km: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_nodes: 8,
            steps: 512,
            seed: 0,
            process: SynthProcess::Diffusion,
            embedding_signal: true,
            embedding_dim: 1536,
            alpha: 0.5,
            noise_std: 1.0,
            amplitude: 2.0,
            period: 24.0,
            bias_base: 10.0,
            bias_spread: 3.0,
            sigma_km: 3.0,
        }
    }
}

const CENTRE: (f64, f64) = (40.0, -75.15);
const GRID_KM: f64 = 5.0;
const JITTER_KM: f64 = 1.0;

#[derive(Clone, Debug)]
pub struct SynthData {
    pub regions: RegionSet,
    pub graph: TrafficGraph,
    pub demand: DemandMatrix,
    pub embeddings: EmbeddingTable,
    pub node_bias: Vec<f64>,
}

/// Synthetic city: centroids on a jittered 5 km grid around (40.0, −75.15), a Gaussian-kernel
/// graph over them, per-node embeddings and a demand series from `process`.
/// Deterministic for a given configuration.
pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthData> {
    if cfg.n_nodes < 2 || cfg.steps < 64 {
        return Err(Error::Validation(format!(
            "synthetic data needs n_nodes ≥ 2 and steps ≥ 64, got {} and {}",
            cfg.n_nodes, cfg.steps
        )));
    }
    if cfg.embedding_dim == 0 || !(cfg.period > 0.0) || cfg.noise_std < 0.0 {
        return Err(Error::Validation("embedding_dim, period must be positive and noise_std non-negative".into()));
    }
    let n = cfg.n_nodes;
    let d = cfg.embedding_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };

    let mut coords = Vec::with_capacity(n);
    let mut emb = Vec::with_capacity(n * d);
    let mut direction = Vec::with_capacity(d);
    {
        let mut rng2 = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5EED));
        let cols = (n as f64).sqrt().ceil() as usize;
        let rows = n.div_ceil(cols);
        let km_lat = 1.0 / 111.195;
        let km_lon = km_lat / CENTRE.0.to_radians().cos();
        for k in 0..n {
            let (r, c) = ((k / cols) as f64, (k % cols) as f64);
            let north = (r - (rows as f64 - 1.0) / 2.0) * GRID_KM + rng2.random_range(-JITTER_KM..JITTER_KM);
            let east = (c - (cols as f64 - 1.0) / 2.0) * GRID_KM + rng2.random_range(-JITTER_KM..JITTER_KM);
            coords.push(LatLon::new(CENTRE.0 + north * km_lat, CENTRE.1 + east * km_lon));
        }
    }
    for _ in 0..n * d {
        emb.push(normal());
    }
    for _ in 0..d {
        direction.push(normal());
    }
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let node_bias: Vec<f64> = (0..n)
        .map(|v| {
            if cfg.embedding_signal {
                let proj: f64 = emb[v * d..(v + 1) * d].iter().zip(&direction).map(|(a, b)| a * b).sum();
                cfg.bias_base + cfg.bias_spread * proj / norm
            } else {
                cfg.bias_base
            }
        })
        .collect();

    let regions = RegionSet::from_centroids(&coords)?;
    let graph = build_adjacency(
        &regions,
        crate::graph::DEFAULT_CUTOFF_KM,
        WeightMode::GaussianKernel { sigma_km: cfg.sigma_km },
    )?;
    let prop = gcn_normalize(&graph);

    let season = |t: usize| cfg.amplitude * (2.0 * std::f64::consts::PI * t as f64 / cfg.period).sin();
    let mut values = Vec::with_capacity(cfg.steps * n);
    match cfg.process {
        SynthProcess::Diffusion => {
            let mut x = node_bias.clone();
            values.extend_from_slice(&x);
            for t in 1..cfg.steps {
                let s = season(t);
                let next: Vec<f64> = (0..n)
                    .map(|i| {
                        let mixed: f64 = (0..n).map(|j| prop.get(i, j) * x[j]).sum();
                        (cfg.alpha * mixed + node_bias[i] + s + cfg.noise_std * normal()).max(0.0)
                    })
                    .collect();
                values.extend_from_slice(&next);
                x = next;
            }
        }
        SynthProcess::SeasonalPlusNoise => {
            for t in 0..cfg.steps {
                let s = season(t);
                for b in &node_bias {
                    values.push((b + s + cfg.noise_std * normal()).max(0.0));
                }
            }
        }
    }

    let ids = regions.ids();
    let t0 = DateTime::<Utc>::from_timestamp(1_546_300_800, 0).expect("valid epoch"); // 2019-01-01
    let demand = DemandMatrix::new(values, cfg.steps, ids.clone(), t0, 3600)?;
    let embeddings = EmbeddingTable::new(ids, d, emb, vec![1; n])?;
    Ok(SynthData {
        regions,
        graph,
        demand,
        embeddings,
        node_bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            n_nodes: 6,
            steps: 200,
            seed,
            embedding_dim: 8,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = synth_generate(&small(4)).unwrap();
        let b = synth_generate(&small(4)).unwrap();
        assert_eq!(a.demand, b.demand);
        assert_eq!(a.embeddings, b.embeddings);
        assert_eq!(a.graph, b.graph);
        let c = synth_generate(&small(5)).unwrap();
        assert_ne!(a.demand, c.demand);
    }

    #[test]
    fn degenerate_process_is_constant_bias() {
        let cfg = SynthConfig {
            alpha: 0.0,
            noise_std: 0.0,
            amplitude: 0.0,
            ..small(1)
        };
        let s = synth_generate(&cfg).unwrap();
        for t in 0..cfg.steps {
            for v in 0..cfg.n_nodes {
                assert_eq!(s.demand.get(t, v), s.node_bias[v]);
            }
        }
    }

    #[test]
    fn bias_follows_embedding_only_with_signal() {
        let with = synth_generate(&small(2)).unwrap();
        assert!(with.node_bias.windows(2).any(|w| w[0] != w[1]));
        let without = synth_generate(&SynthConfig { embedding_signal: false, ..small(2) }).unwrap();
        assert!(without.node_bias.iter().all(|&b| b == 10.0));
    }

    #[test]
    fn diffusion_has_spatial_lag_correlation() {
        let cfg = SynthConfig {
            n_nodes: 8,
            steps: 1024,
            embedding_dim: 16,
            ..SynthConfig::default()
        };
        let s = synth_generate(&cfg).unwrap();
        let prop = gcn_normalize(&s.graph);
        let n = cfg.n_nodes;
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for t in 0..cfg.steps - 1 {
            for i in 0..n {
                xs.push((0..n).map(|j| prop.get(i, j) * s.demand.get(t, j)).sum::<f64>());
                ys.push(s.demand.get(t + 1, i));
            }
        }
        let r = pearson(&xs, &ys);
        assert!(r > 0.5, "lag-1 spatial correlation {r}");
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let k = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / k, b.iter().sum::<f64>() / k);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn rejects_tiny_configs() {
        assert!(synth_generate(&SynthConfig { n_nodes: 1, ..small(0) }).is_err());
        assert!(synth_generate(&SynthConfig { steps: 63, ..small(0) }).is_err());
        assert!(synth_generate(&SynthConfig { n_nodes: 2, steps: 64, ..small(0) }).is_ok());
    }
}
