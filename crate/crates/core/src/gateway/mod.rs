//! Completion backends and the repeated-query protocol.
//!
//! A [`Gateway`] sends one prompt `repeats` times, sequentially, and returns
//! the raw completions as a [`CompletionBatch`]. Live backends record every
//! response in the [`ResponseCache`]; the replay backend serves batches from
//! that cache and fails on a miss.

mod cache;
mod live;
mod mock;
mod prompt;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{cache_header, CacheEntry, ResponseCache, CACHE_SCHEMA, CACHE_VERSION};
pub use live::LiveBackend;
pub use mock::{MockBackend, MockFallback, MockTranscript};
pub use prompt::{build_prompt, hash_text, PlaceholderMode, PromptError, PromptSpec, TEMPLATE_VERSION};

use crate::jsonl::JsonlError;

pub const DEFAULT_REPEATS: u32 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Live,
    Mock,
    Replay,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(Self::Live),
            "mock" => Ok(Self::Mock),
            "replay" => Ok(Self::Replay),
            other => Err(format!("unknown backend `{other}` (expected live, mock or replay)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    pub model_name: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default)]
    pub api_key_env: Option<String>,
}

fn default_max_tokens() -> u32 {
    16
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            endpoint: Some("https://api.openai.com/v1".into()),
            model_name: "text-davinci-003".into(),
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            api_key_env: Some("OPENAI_API_KEY".into()),
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(BackendError::Config(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.kind == BackendKind::Live {
            let missing = |v: &Option<String>| v.as_deref().is_none_or(|s| s.trim().is_empty());
            if missing(&self.endpoint) {
                return Err(BackendError::Config("live backend needs an endpoint".into()));
            }
            if missing(&self.api_key_env) {
                return Err(BackendError::Config("live backend needs api_key_env".into()));
            }
        }
        Ok(())
    }
}

/// A single completion call.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompletionRequest {
    pub prompt: String,
    pub prompt_hash: String,
    pub repeat_index: u32,
}

pub trait CompletionBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError>;
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for Arc<T> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    #[error("network error: {0}")]
    Network(String),
    #[error("rate limited")]
    RateLimited { retry_after: Option<Duration> },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Network(_) | BackendError::RateLimited { .. } => true,
            BackendError::Http { status, .. } => *status >= 500,
            BackendError::Protocol(_) | BackendError::Config(_) => false,
        }
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("repeats must be at least 1")]
    InvalidRepeats,
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("backend failed after {attempts} attempts: {source}")]
    Backend {
        attempts: u32,
        #[source]
        source: BackendError,
    },
    #[error("replay cache miss for prompt {prompt_hash}: {available} of {needed} responses stored")]
    ReplayMiss {
        prompt_hash: String,
        available: usize,
        needed: u32,
    },
    #[error("response cache: {0}")]
    Cache(#[from] JsonlError),
    #[error("{0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1` (1-based `attempt`).
    pub fn backoff(&self, attempt: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(attempt.saturating_sub(1))
    }

    pub fn run<T>(
        &self,
        mut call: impl FnMut() -> Result<T, BackendError>,
    ) -> Result<T, GatewayError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            match call() {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() && attempt < self.max_attempts => {
                    let mut delay = self.backoff(attempt);
                    if let BackendError::RateLimited { retry_after: Some(after) } = e {
                        delay = delay.max(after);
                    }
                    log::warn!("attempt {attempt} failed ({e}); retrying in {delay:?}");
                    std::thread::sleep(delay);
                }
                Err(BackendError::RateLimited { .. }) => {
                    return Err(GatewayError::RateLimited { attempts: attempt })
                }
                Err(source) => return Err(GatewayError::Backend { attempts: attempt, source }),
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchMetadata {
    pub kind: BackendKind,
    pub model_name: String,
    pub temperature: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletionBatch {
    pub prompt_hash: String,
    pub raw_completions: Vec<String>,
    pub backend: BatchMetadata,
    pub started_at_ms: u64,
    pub finished_at_ms: u64,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Issues prompts under one backend configuration.
pub struct Gateway {
    config: BackendConfig,
    backend: Option<Arc<dyn CompletionBackend>>,
    cache: Option<Arc<ResponseCache>>,
    retry: RetryPolicy,
    consumed: AtomicU64,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("config", &self.config)
            .field("retry", &self.retry)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    /// Live backend built from `config`, recording into `cache`.
    pub fn live(config: BackendConfig, cache: Arc<ResponseCache>) -> Result<Self, GatewayError> {
        let backend = LiveBackend::from_config(&config).map_err(|e| GatewayError::Config(e.to_string()))?;
        Self::with_backend(config, Arc::new(backend), Some(cache))
    }

    pub fn replay(config: BackendConfig, cache: Arc<ResponseCache>) -> Result<Self, GatewayError> {
        if config.kind != BackendKind::Replay {
            return Err(GatewayError::Config("replay gateway needs kind = replay".into()));
        }
        config.validate().map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(Self {
            config,
            backend: None,
            cache: Some(cache),
            retry: RetryPolicy::default(),
            consumed: AtomicU64::new(0),
        })
    }

    /// Any backend; responses are recorded only when `config.kind` is live.
    pub fn with_backend(
        config: BackendConfig,
        backend: Arc<dyn CompletionBackend>,
        cache: Option<Arc<ResponseCache>>,
    ) -> Result<Self, GatewayError> {
        if config.kind == BackendKind::Replay {
            return Err(GatewayError::Config("use Gateway::replay for the replay backend".into()));
        }
        config.validate().map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(Self {
            config,
            backend: Some(backend),
            cache,
            retry: RetryPolicy::default(),
            consumed: AtomicU64::new(0),
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    /// Completions handed out so far, across all batches.
    pub fn completions_consumed(&self) -> u64 {
        self.consumed.load(Ordering::Relaxed)
    }

    pub fn prompt_hash(&self, prompt: &PromptSpec) -> String {
        prompt.hash(&self.config.model_name, self.config.temperature)
    }

    pub fn complete_n(&self, prompt: &PromptSpec, repeats: u32) -> Result<CompletionBatch, GatewayError> {
        if repeats == 0 {
            return Err(GatewayError::InvalidRepeats);
        }
        let prompt_hash = self.prompt_hash(prompt);
        let metadata = BatchMetadata {
            kind: self.config.kind,
            model_name: self.config.model_name.clone(),
            temperature: self.config.temperature,
        };

        let Some(backend) = &self.backend else {
            let cache = self.cache.as_ref().expect("replay gateway has a cache");
            let entries = cache.lookup(&prompt_hash, repeats).ok_or_else(|| GatewayError::ReplayMiss {
                prompt_hash: prompt_hash.clone(),
                available: cache.count(&prompt_hash),
                needed: repeats,
            })?;
            self.consumed.fetch_add(entries.len() as u64, Ordering::Relaxed);
            return Ok(CompletionBatch {
                started_at_ms: entries.iter().map(|e| e.recorded_at_ms).min().unwrap_or(0),
                finished_at_ms: entries.iter().map(|e| e.recorded_at_ms).max().unwrap_or(0),
                raw_completions: entries.into_iter().map(|e| e.text).collect(),
                prompt_hash,
                backend: metadata,
            });
        };

        let text = prompt.render();
        let started_at_ms = now_ms();
        let mut raw = Vec::with_capacity(repeats as usize);
        for repeat_index in 0..repeats {
            let request = CompletionRequest {
                prompt: text.clone(),
                prompt_hash: prompt_hash.clone(),
                repeat_index,
            };
            let completion = self.retry.run(|| backend.complete(&request))?;
            if self.config.kind == BackendKind::Live {
                if let Some(cache) = &self.cache {
                    cache.record(CacheEntry {
                        prompt_hash: prompt_hash.clone(),
                        repeat_index,
                        text: completion.clone(),
                        model_name: self.config.model_name.clone(),
                        recorded_at_ms: now_ms(),
                    })?;
                }
            }
            self.consumed.fetch_add(1, Ordering::Relaxed);
            raw.push(completion);
        }
        Ok(CompletionBatch {
            prompt_hash,
            raw_completions: raw,
            backend: metadata,
            started_at_ms,
            finished_at_ms: now_ms(),
        })
    }
}
