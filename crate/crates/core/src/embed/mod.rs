//! Text embeddings from a remote service, behind a content-addressed local
//! cache and an offline mode.

mod cache;
mod http;

pub use cache::EmbedCache;
pub use http::HttpBackend;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedConfig {
    pub endpoint_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub batch_size: usize,
    pub timeout_s: f64,
    pub max_retries: u32,
    /// Delay before the first retry; doubles per attempt up to 8× this value.
    pub retry_backoff_s: f64,
    pub offline: bool,
    pub max_in_flight: usize,
    /// Expected vector length.
    pub dim: usize,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            endpoint_url: "https://api.openai.com/v1/embeddings".into(),
            model_name: "text-embedding-3-small".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            batch_size: 64,
            timeout_s: 30.0,
            max_retries: 3,
            retry_backoff_s: 0.5,
            offline: false,
            max_in_flight: 4,
            dim: 1536,
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_in_flight == 0 || self.dim == 0 {
            return Err(Error::Validation("batch_size, max_in_flight and dim must be at least 1".into()));
        }
        if !(self.timeout_s > 0.0) || !(self.retry_backoff_s >= 0.0) {
            return Err(Error::Validation("timeout_s must be positive and retry_backoff_s non-negative".into()));
        }
        Ok(())
    }
}

/// Anything that turns a batch of texts into vectors, one per text, in order.
pub trait EmbeddingBackend: Sync {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
}

/// Embeds `texts` through the configured HTTP endpoint. The endpoint is only
/// contacted when the cache misses and `cfg.offline` is false.
pub fn embed_texts(texts: &[String], cfg: &EmbedConfig, cache: &mut EmbedCache) -> Result<Vec<Vec<f64>>> {
    embed_texts_with(texts, cfg, cache, || HttpBackend::from_config(cfg))
}

/// As [`embed_texts`] with a caller-supplied backend, built lazily on the
/// first cache miss.
pub fn embed_texts_with<B, F>(
    texts: &[String],
    cfg: &EmbedConfig,
    cache: &mut EmbedCache,
    make_backend: F,
) -> Result<Vec<Vec<f64>>>
where
    B: EmbeddingBackend,
    F: FnOnce() -> Result<B>,
{
    cfg.validate()?;
    if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
        return Err(Error::Validation(format!("text {i} is empty")));
    }
    let keys: Vec<String> = texts.iter().map(|t| EmbedCache::key(&cfg.model_name, t)).collect();
    let mut missing: BTreeMap<&str, &str> = BTreeMap::new();
    for (k, t) in keys.iter().zip(texts) {
        if cache.get(k).is_none() {
            missing.insert(k, t);
        }
    }
    log::info!("embedding {} texts: {} cached, {} to fetch", texts.len(), texts.len() - missing.len(), missing.len());

    if !missing.is_empty() {
        if cfg.offline {
            let mut seen = HashSet::new();
            let list = keys
                .iter()
                .zip(texts)
                .filter(|(k, _)| missing.contains_key(k.as_str()) && seen.insert(k.as_str()))
                .map(|(_, t)| t.clone())
                .collect();
            return Err(Error::OfflineMiss { missing: list });
        }
        let backend = make_backend()?;
        let todo: Vec<(&str, &str)> = missing.into_iter().collect();
        let batches: Vec<&[(&str, &str)]> = todo.chunks(cfg.batch_size).collect();
        for wave in batches.chunks(cfg.max_in_flight) {
            let results: Vec<Result<Vec<Vec<f64>>>> = std::thread::scope(|s| {
                let handles: Vec<_> = wave
                    .iter()
                    .map(|batch| {
                        let texts: Vec<String> = batch.iter().map(|(_, t)| t.to_string()).collect();
                        let backend = &backend;
                        s.spawn(move || backend.embed_batch(&texts))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("embedding worker panicked")).collect()
            });
            for (batch, result) in wave.iter().zip(results) {
                let vectors = result?;
                if vectors.len() != batch.len() {
                    return Err(Error::Contract(format!(
                        "service returned {} vectors for {} texts",
                        vectors.len(),
                        batch.len()
                    )));
                }
                for ((key, _), v) in batch.iter().zip(vectors) {
                    if v.len() != cfg.dim {
                        return Err(Error::Contract(format!(
                            "embedding dimension mismatch: expected {}, got {}",
                            cfg.dim,
                            v.len()
                        )));
                    }
                    if v.iter().any(|x| !x.is_finite()) {
                        return Err(Error::Contract("service returned a non-finite embedding".into()));
                    }
                    cache.insert(key.to_string(), v);
                }
            }
        }
    }
    Ok(keys
        .iter()
        .map(|k| cache.get(k).expect("every key is cached by now").to_vec())
        .collect())
}
