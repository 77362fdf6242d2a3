use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EmbedConfig, EmbeddingBackend};
use crate::error::{Error, Result};

/// Bearer token that never prints.
#[derive(Clone)]
struct Secret(String);

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(***)")
    }
}

/// Client for a `{"model", "input"}` → `{"data": [{"embedding"}]}` endpoint.
#[derive(Debug)]
pub struct HttpBackend {
    agent: ureq::Agent,
    url: String,
    model: String,
    key: Secret,
    max_retries: u32,
    backoff: Duration,
}

#[derive(Serialize)]
struct Request<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct Response {
    data: Vec<Item>,
}

#[derive(Deserialize)]
struct Item {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

const MAX_BODY_BYTES: u64 = 256 * 1024 * 1024;

impl HttpBackend {
    /// Reads the token from the environment variable named in `cfg`.
    pub fn from_config(cfg: &EmbedConfig) -> Result<Self> {
        let key = std::env::var(&cfg.api_key_env).map_err(|_| {
            Error::Validation(format!(
                "environment variable {} must hold the API key for online embedding",
                cfg.api_key_env
            ))
        })?;
        Ok(Self::new(cfg, key))
    }

    pub fn new(cfg: &EmbedConfig, key: String) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_s)))
            .http_status_as_error(false)
            .build();
        HttpBackend {
            agent: ureq::Agent::new_with_config(config),
            url: cfg.endpoint_url.clone(),
            model: cfg.model_name.clone(),
            key: Secret(key),
            max_retries: cfg.max_retries,
            backoff: Duration::from_secs_f64(cfg.retry_backoff_s),
        }
    }

    fn redact(&self, msg: String) -> String {
        if self.key.0.is_empty() {
            msg
        } else {
            msg.replace(&self.key.0, "***")
        }
    }

    fn attempt(&self, body: &[u8]) -> std::result::Result<Vec<Vec<f64>>, (bool, String)> {
        let resp = self
            .agent
            .post(&self.url)
            .header("Authorization", &format!("Bearer {}", self.key.0))
            .header("Content-Type", "application/json")
            .send(body)
            .map_err(|e| (true, e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .into_body()
            .with_config()
            .limit(MAX_BODY_BYTES)
            .read_to_string()
            .map_err(|e| (true, e.to_string()))?;
        if !(200..300).contains(&status) {
            let retry = status == 429 || status >= 500;
            let snippet: String = text.chars().take(200).collect();
            return Err((retry, format!("HTTP {status}: {snippet}")));
        }
        let parsed: Response = serde_json::from_str(&text).map_err(|e| (false, format!("malformed response: {e}")))?;
        let mut items = parsed.data;
        if items.iter().all(|i| i.index.is_some()) {
            items.sort_by_key(|i| i.index);
        }
        Ok(items.into_iter().map(|i| i.embedding).collect())
    }
}

impl EmbeddingBackend for HttpBackend {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let body = serde_json::to_vec(&Request { model: &self.model, input: texts }).map_err(|e| Error::Parse(e.to_string()))?;
        let mut delay = self.backoff;
        let mut last = String::new();
        for attempt in 0..=self.max_retries {
            match self.attempt(&body) {
                Ok(v) => return Ok(v),
                Err((retry, msg)) => {
                    let msg = self.redact(msg);
                    log::warn!("embedding request attempt {} failed: {msg}", attempt + 1);
                    last = msg;
                    if !retry {
                        break;
                    }
                    if attempt < self.max_retries {
                        std::thread::sleep(delay);
                        delay = (delay * 2).min(self.backoff * 8);
                    }
                }
            }
        }
        Err(Error::Transport(format!("embedding request to {} failed: {last}", self.url)))
    }
}
