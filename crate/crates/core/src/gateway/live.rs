//! OpenAI-compatible `/completions` client.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendConfig, BackendError, CompletionBackend, CompletionRequest};

#[derive(Serialize)]
struct CompletionBody<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    max_tokens: u32,
    n: u32,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    text: String,
}

pub struct LiveBackend {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    temperature: f64,
    max_tokens: u32,
    api_key: String,
}

impl std::fmt::Debug for LiveBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LiveBackend")
            .field("url", &self.url)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

impl LiveBackend {
    /// Reads the API key from the environment variable named in `config`.
    pub fn from_config(config: &BackendConfig) -> Result<Self, BackendError> {
        let endpoint = config
            .endpoint
            .as_deref()
            .filter(|e| !e.trim().is_empty())
            .ok_or_else(|| BackendError::Config("live backend needs an endpoint".into()))?;
        let var = config
            .api_key_env
            .as_deref()
            .filter(|v| !v.trim().is_empty())
            .ok_or_else(|| BackendError::Config("live backend needs api_key_env".into()))?;
        let api_key = std::env::var(var)
            .map_err(|_| BackendError::Config(format!("environment variable {var} is not set")))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self {
            client,
            url: format!("{}/completions", endpoint.trim_end_matches('/')),
            model: config.model_name.clone(),
            temperature: config.temperature,
            max_tokens: config.max_tokens,
            api_key,
        })
    }
}

fn retry_after(headers: &reqwest::header::HeaderMap) -> Option<Duration> {
    headers
        .get(reqwest::header::RETRY_AFTER)?
        .to_str()
        .ok()?
        .trim()
        .parse::<u64>()
        .ok()
        .map(Duration::from_secs)
}

impl CompletionBackend for LiveBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let body = CompletionBody {
            model: &self.model,
            prompt: &request.prompt,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            n: 1,
        };
        let response = self
            .client
            .post(&self.url)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| BackendError::Network(e.to_string()))?;
        let status = response.status();
        if status == reqwest::StatusCode::TOO_MANY_REQUESTS {
            return Err(BackendError::RateLimited {
                retry_after: retry_after(response.headers()),
            });
        }
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            return Err(BackendError::Http {
                status: status.as_u16(),
                body,
            });
        }
        let parsed: CompletionResponse = response
            .json()
            .map_err(|e| BackendError::Protocol(format!("bad completion body: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.text)
            .ok_or_else(|| BackendError::Protocol("response has no choices".into()))
    }
}
