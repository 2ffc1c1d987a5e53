//! Blocking clients for OpenAI-compatible model services.
//!
//! Three roles share one transport: the model under test
//! (`POST {base}/chat/completions`), the reference model (same route), and an
//! embedding service (`POST {base}/embeddings`) used for similarity scoring.
//!
//! Retries cover 5xx responses and connection failures only. The delay before
//! retry `k` (0-based) is `backoff_base * 2^k`, jittered by ±20%.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;
use url::Url;

/// Environment variable holding the completion API key.
pub const API_KEY_ENV: &str = "BENCHCUT_API_KEY";
/// Environment variable holding the embedding API key (falls back to [`API_KEY_ENV`]).
pub const EMBED_API_KEY_ENV: &str = "BENCHCUT_EMBED_API_KEY";

pub const DEFAULT_INSTRUCTION_TEMPLATE: &str = "Answer in approximately {n} words.";

#[derive(Debug, Error)]
pub enum EndpointError {
    #[error("invalid endpoint config: {0}")]
    Config(String),
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("authentication rejected (HTTP {status})")]
    Auth { status: u16 },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    pub model_name: String,
    /// Per-request timeout in seconds.
    pub timeout_s: f64,
    pub max_retries: u32,
    pub temperature: f64,
    #[serde(default)]
    pub max_tokens: Option<u32>,
    /// Base delay before the first retry, in milliseconds.
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
}

fn default_backoff_ms() -> u64 {
    500
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            api_key: None,
            model_name: model_name.into(),
            timeout_s: 120.0,
            max_retries: 3,
            temperature: 0.0,
            max_tokens: None,
            backoff_base_ms: default_backoff_ms(),
        }
    }

    /// Fills `api_key` from the first set variable in `vars` unless a key is
    /// already configured.
    pub fn with_env_key(mut self, vars: &[&str]) -> Self {
        if self.api_key.is_none() {
            self.api_key = vars
                .iter()
                .find_map(|v| std::env::var(v).ok().filter(|k| !k.is_empty()));
        }
        self
    }

    pub fn validate(&self) -> Result<(), EndpointError> {
        let url = Url::parse(&self.base_url)
            .map_err(|e| EndpointError::Config(format!("base_url `{}`: {e}", self.base_url)))?;
        if !matches!(url.scheme(), "http" | "https") {
            return Err(EndpointError::Config(format!(
                "base_url `{}` must use http or https",
                self.base_url
            )));
        }
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err(EndpointError::Config("timeout must be > 0".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(EndpointError::Config("temperature must be >= 0".into()));
        }
        if self.model_name.is_empty() {
            return Err(EndpointError::Config("model name is empty".into()));
        }
        Ok(())
    }

    fn route(&self, path: &str) -> String {
        format!("{}/{}", self.base_url.trim_end_matches('/'), path)
    }

    fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestrictionMode {
    /// Ask for a response of roughly `n_words` words.
    WordsApprox,
    Unlimited,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Restriction {
    pub mode: RestrictionMode,
    pub instruction_template: String,
    pub n_words: u32,
}

impl Restriction {
    pub fn unlimited() -> Self {
        Restriction {
            mode: RestrictionMode::Unlimited,
            instruction_template: DEFAULT_INSTRUCTION_TEMPLATE.into(),
            n_words: 50,
        }
    }

    pub fn approx_words(n_words: u32) -> Self {
        Restriction {
            mode: RestrictionMode::WordsApprox,
            instruction_template: DEFAULT_INSTRUCTION_TEMPLATE.into(),
            n_words,
        }
    }

    /// Parses the command-line spelling: a word count such as `50`, or `none`.
    pub fn parse(s: &str) -> Result<Self, EndpointError> {
        match s.trim() {
            "none" | "unlimited" | "inf" => Ok(Self::unlimited()),
            other => other
                .parse::<u32>()
                .ok()
                .filter(|&n| n >= 1)
                .map(Self::approx_words)
                .ok_or_else(|| {
                    EndpointError::Config(format!(
                        "restriction `{other}` is neither a positive word count nor `none`"
                    ))
                }),
        }
    }

    /// Token used inside cell keys: the word count, or `none`.
    pub fn key(&self) -> String {
        match self.mode {
            RestrictionMode::WordsApprox => self.n_words.to_string(),
            RestrictionMode::Unlimited => "none".into(),
        }
    }

    pub fn is_restricted(&self) -> bool {
        self.mode == RestrictionMode::WordsApprox
    }
}

/// Appends the length instruction to a prompt. Callers apply this exactly once
/// per request; applying it twice appends the instruction twice.
pub fn apply_restriction(prompt: &str, r: &Restriction) -> Result<String, EndpointError> {
    match r.mode {
        RestrictionMode::Unlimited => Ok(prompt.to_string()),
        RestrictionMode::WordsApprox => {
            if r.n_words == 0 {
                return Err(EndpointError::Config("n_words must be >= 1".into()));
            }
            if !r.instruction_template.contains("{n}") {
                return Err(EndpointError::Config(
                    "instruction template lacks the {n} placeholder".into(),
                ));
            }
            let instruction = r
                .instruction_template
                .replace("{n}", &r.n_words.to_string());
            Ok(format!("{prompt}\n{instruction}"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawCompletion {
    pub text: String,
    pub reported_usage: Option<Usage>,
    /// Final status, after any retries.
    pub http_status: u16,
}

struct Transport {
    http: reqwest::blocking::Client,
    cfg: EndpointConfig,
}

impl Transport {
    fn new(cfg: EndpointConfig) -> Result<Self, EndpointError> {
        cfg.validate()?;
        let http = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout())
            .build()
            .map_err(|e| EndpointError::Config(e.to_string()))?;
        Ok(Transport { http, cfg })
    }

    fn backoff(&self, retry: u32) -> Duration {
        let base = self.cfg.backoff_base_ms as f64 * 2f64.powi(retry as i32);
        let jitter = rand::thread_rng().gen_range(0.8..=1.2);
        Duration::from_secs_f64(base * jitter / 1000.0)
    }

    fn post(&self, path: &str, body: &Value) -> Result<(u16, Value), EndpointError> {
        let url = self.cfg.route(path);
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            let mut req = self.http.post(&url).json(body);
            if let Some(key) = &self.cfg.api_key {
                req = req.bearer_auth(key);
            }
            let retryable = match req.send() {
                Ok(resp) => {
                    let status = resp.status().as_u16();
                    match status {
                        200..=299 => {
                            let value: Value = resp.json().map_err(|e| {
                                EndpointError::Protocol(format!("response is not JSON: {e}"))
                            })?;
                            return Ok((status, value));
                        }
                        401 | 403 => return Err(EndpointError::Auth { status }),
                        500..=599 => format!("HTTP {status}"),
                        _ => {
                            let body = resp.text().unwrap_or_default();
                            return Err(EndpointError::Http { status, body });
                        }
                    }
                }
                Err(e) if e.is_timeout() => return Err(EndpointError::Timeout(self.cfg.timeout())),
                Err(e) => e.to_string(),
            };
            if attempt > self.cfg.max_retries {
                return Err(EndpointError::Transport {
                    attempts: attempt,
                    message: retryable,
                });
            }
            let wait = self.backoff(attempt - 1);
            log::debug!("{url}: {retryable}; retrying in {wait:?}");
            std::thread::sleep(wait);
        }
    }
}

/// Client for a chat-completions endpoint.
pub struct ChatClient {
    transport: Transport,
}

impl ChatClient {
    pub fn new(cfg: EndpointConfig) -> Result<Self, EndpointError> {
        Ok(ChatClient {
            transport: Transport::new(cfg)?,
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.transport.cfg
    }

    /// Sends `prompt` as a single user message and returns the first choice.
    pub fn complete(&self, prompt: &str) -> Result<RawCompletion, EndpointError> {
        let cfg = &self.transport.cfg;
        let mut body = json!({
            "model": cfg.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": cfg.temperature,
        });
        if let Some(max) = cfg.max_tokens {
            body["max_tokens"] = json!(max);
        }
        let (status, value) = self.transport.post("chat/completions", &body)?;
        let text = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| {
                EndpointError::Protocol("response lacks choices[0].message.content".into())
            })?
            .to_string();
        let reported_usage = value
            .get("usage")
            .and_then(|u| serde_json::from_value::<Usage>(u.clone()).ok());
        Ok(RawCompletion {
            text,
            reported_usage,
            http_status: status,
        })
    }

    /// Reference-model call. Same transport semantics as [`ChatClient::complete`].
    pub fn fetch_reference(&self, prompt: &str) -> Result<String, EndpointError> {
        self.complete(prompt).map(|c| c.text)
    }
}

/// Convenience wrapper matching the operation signature used by the runner.
pub fn complete(prompt: &str, cfg: &EndpointConfig) -> Result<RawCompletion, EndpointError> {
    ChatClient::new(cfg.clone())?.complete(prompt)
}

pub fn fetch_reference(prompt: &str, cfg: &EndpointConfig) -> Result<String, EndpointError> {
    ChatClient::new(cfg.clone())?.fetch_reference(prompt)
}

/// Anything that maps text to an embedding vector.
pub trait Embedder: Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, EndpointError>;
}

impl<F> Embedder for F
where
    F: Fn(&str) -> Result<Vec<f64>, EndpointError> + Sync,
{
    fn embed(&self, text: &str) -> Result<Vec<f64>, EndpointError> {
        self(text)
    }
}

type CacheKey = [u8; 32];
type Slot = Arc<Mutex<Option<Vec<f64>>>>;

/// Client for an embeddings endpoint. Results are cached per
/// `(model_name, text)` for the lifetime of the client; concurrent callers
/// asking for the same text wait on a single upstream request.
pub struct EmbeddingClient {
    transport: Transport,
    cache: Mutex<HashMap<CacheKey, Slot>>,
}

impl EmbeddingClient {
    pub fn new(cfg: EndpointConfig) -> Result<Self, EndpointError> {
        Ok(EmbeddingClient {
            transport: Transport::new(cfg)?,
            cache: Mutex::new(HashMap::new()),
        })
    }

    fn key(&self, text: &str) -> CacheKey {
        let mut h = Sha256::new();
        h.update(self.transport.cfg.model_name.as_bytes());
        h.update([0u8]);
        h.update(text.as_bytes());
        h.finalize().into()
    }

    fn fetch(&self, text: &str) -> Result<Vec<f64>, EndpointError> {
        let body = json!({"model": self.transport.cfg.model_name, "input": text});
        let (_, value) = self.transport.post("embeddings", &body)?;
        let raw = value
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| EndpointError::Protocol("response lacks data[0].embedding".into()))?;
        let vector = raw
            .iter()
            .map(|v| {
                v.as_f64()
                    .ok_or_else(|| EndpointError::Protocol("non-numeric embedding entry".into()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if vector.is_empty() {
            return Err(EndpointError::Protocol("empty embedding vector".into()));
        }
        Ok(vector)
    }
}

impl Embedder for EmbeddingClient {
    fn embed(&self, text: &str) -> Result<Vec<f64>, EndpointError> {
        if text.is_empty() {
            return Err(EndpointError::Config("cannot embed empty text".into()));
        }
        let slot = {
            let mut cache = self.cache.lock().expect("embedding cache poisoned");
            cache.entry(self.key(text)).or_default().clone()
        };
        let mut guard = slot.lock().expect("embedding slot poisoned");
        if let Some(v) = guard.as_ref() {
            return Ok(v.clone());
        }
        let v = self.fetch(text)?;
        *guard = Some(v.clone());
        Ok(v)
    }
}
