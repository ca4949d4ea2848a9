//! A local OpenAI-compatible `/completions` endpoint for offline runs.
//!
//! It answers the emotion prompt with one label picked from the prompt's own
//! list (seeded by the prompt text) or with a constant reply.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use emocap_core::gateway::hash_text;
use serde::Deserialize;
use serde_json::json;

const LIST_MARKER: &str = "Choose one emotion from the list: ";

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StubPolicy {
    Constant(String),
    /// A label from the prompt's list, chosen by hashing (seed, prompt).
    PickFromList { seed: u64 },
}

#[derive(Debug, Deserialize)]
struct Body {
    model: String,
    prompt: String,
    #[serde(default)]
    temperature: Option<f64>,
    #[serde(default)]
    max_tokens: Option<u32>,
    #[serde(default)]
    n: Option<u32>,
}

struct Shared {
    policy: StubPolicy,
    requests: Arc<AtomicU64>,
}

/// Labels offered by an emotion prompt, in order.
pub fn offered_labels(prompt: &str) -> Vec<String> {
    let Some(start) = prompt.rfind(LIST_MARKER) else {
        return Vec::new();
    };
    let list = prompt[start + LIST_MARKER.len()..].trim_end().trim_end_matches('.');
    list.split(", ")
        .flat_map(|part| part.split(" and "))
        .map(|s| s.trim_start_matches("and ").trim())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn answer(policy: &StubPolicy, prompt: &str) -> String {
    match policy {
        StubPolicy::Constant(text) => text.clone(),
        StubPolicy::PickFromList { seed } => {
            let labels = offered_labels(prompt);
            if labels.is_empty() {
                return "\n\nI am not sure.".into();
            }
            let digest = hash_text(&format!("{seed}:{prompt}"));
            let n = u64::from_str_radix(&digest[..16], 16).unwrap_or(0);
            format!("\n\n{}", labels[(n % labels.len() as u64) as usize])
        }
    }
}

fn error(status: StatusCode, message: &str) -> Response {
    (status, Json(json!({ "error": { "message": message } }))).into_response()
}

async fn completions(State(shared): State<Arc<Shared>>, headers: HeaderMap, body: String) -> Response {
    shared.requests.fetch_add(1, Ordering::SeqCst);
    let authorized = headers
        .get("authorization")
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("Bearer ") && v.len() > 7);
    if !authorized {
        return error(StatusCode::UNAUTHORIZED, "missing bearer token");
    }
    let body: Body = match serde_json::from_str(&body) {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, &e.to_string()),
    };
    if body.n.unwrap_or(1) != 1 {
        return error(StatusCode::BAD_REQUEST, "only n = 1 is supported");
    }
    if body.temperature.is_some_and(|t| t < 0.0) || body.max_tokens == Some(0) {
        return error(StatusCode::BAD_REQUEST, "bad sampling parameters");
    }
    let text = answer(&shared.policy, &body.prompt);
    Json(json!({
        "object": "text_completion",
        "model": body.model,
        "choices": [{ "text": text, "index": 0, "finish_reason": "stop" }],
    }))
    .into_response()
}

pub fn router(policy: StubPolicy, requests: Arc<AtomicU64>) -> Router {
    let shared = Arc::new(Shared { policy, requests });
    Router::new()
        .route("/v1/completions", post(completions))
        .route("/completions", post(completions))
        .with_state(shared)
}

/// A stub running on a background thread until dropped.
pub struct StubServer {
    addr: SocketAddr,
    requests: Arc<AtomicU64>,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl StubServer {
    /// Binds an ephemeral loopback port.
    pub fn start(policy: StubPolicy) -> std::io::Result<Self> {
        Self::bind(SocketAddr::from(([127, 0, 0, 1], 0)), policy)
    }

    pub fn bind(addr: SocketAddr, policy: StubPolicy) -> std::io::Result<Self> {
        let listener = std::net::TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let requests = Arc::new(AtomicU64::new(0));
        let app = router(policy, Arc::clone(&requests));
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let runtime = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
        let thread = std::thread::spawn(move || {
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).expect("listener");
                let _ = axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
            });
        });
        Ok(Self {
            addr,
            requests,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    /// Base URL to use as a backend endpoint.
    pub fn endpoint(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn requests(&self) -> u64 {
        self.requests.load(Ordering::SeqCst)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
