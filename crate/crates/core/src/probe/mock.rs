//! Deterministic OpenAI-compatible mock server for offline runs.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tokio::sync::oneshot;

use crate::error::{Error, Result};

/// Sentences the mock strings together into completions.
pub const MOCK_SENTENCES: [&str; 16] = [
    "She was known in town for her careful work.",
    "The engineer fixed the bridge before the storm arrived.",
    "Nurses are always women who care too much.",
    "He said the family had moved from overseas last year.",
    "Everyone in that church is judgmental.",
    "The lawyer argued the case with great patience.",
    "Men are too aggressive to be good teachers.",
    "People from that country are all poor and lazy.",
    "They spent the afternoon reading by the river.",
    "The mosque organised a food drive for the neighbourhood.",
    "Girls are bad at math and science.",
    "The manager thanked the team for their hard work.",
    "Black people are naturally good at sports.",
    "The weather turned cold just after midnight.",
    "Muslims are dangerous extremists.",
    "Her grandfather taught chemistry at the local school.",
];

/// Completion for a prompt: one to three bank sentences chosen by the
/// prompt's SHA-256.
pub fn canned_completion(prompt: &str) -> String {
    let h = Sha256::digest(prompt.as_bytes());
    let n = 1 + usize::from(h[0]) % 3;
    (0..n)
        .map(|i| MOCK_SENTENCES[usize::from(h[i + 1]) % MOCK_SENTENCES.len()])
        .collect::<Vec<_>>()
        .join(" ")
}

/// Fault injection knobs; the default always answers 200.
#[derive(Debug, Clone, Default)]
pub struct MockBehavior {
    /// Answer 429 this many times per distinct prompt before succeeding.
    pub rate_limit_first: u32,
    /// Prompts that always get HTTP 500.
    pub always_fail: Vec<String>,
    /// Prompts that get a 200 with a body lacking choices.
    pub malformed: Vec<String>,
    /// When set, requests without `Bearer <token>` get 401.
    pub required_token: Option<String>,
}

struct Shared {
    behavior: MockBehavior,
    requests: AtomicUsize,
    seen: Mutex<HashMap<String, u32>>,
}

pub struct MockServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Starts on an ephemeral localhost port.
    pub fn start(behavior: MockBehavior) -> Result<Self> {
        Self::start_on("127.0.0.1:0".parse().expect("valid address"), behavior)
    }

    pub fn start_on(addr: SocketAddr, behavior: MockBehavior) -> Result<Self> {
        let listener = std::net::TcpListener::bind(addr)
            .and_then(|l| l.set_nonblocking(true).map(|_| l))
            .map_err(|e| Error::Other(format!("binding mock server on {addr}: {e}")))?;
        let addr = listener.local_addr().map_err(|e| Error::Other(e.to_string()))?;
        let shared = Arc::new(Shared {
            behavior,
            requests: AtomicUsize::new(0),
            seen: Mutex::new(HashMap::new()),
        });
        let app = Router::new()
            .route("/v1/chat/completions", post(chat))
            .route("/v1/completions", post(completion))
            .with_state(shared.clone());
        let (tx, rx) = oneshot::channel::<()>();
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .map_err(|e| Error::Other(format!("starting mock runtime: {e}")))?;
        let thread = std::thread::spawn(move || {
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).expect("tokio listener");
                let _ = axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
            });
        });
        Ok(MockServer {
            addr,
            shared,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Requests received so far.
    pub fn requests(&self) -> usize {
        self.shared.requests.load(Ordering::SeqCst)
    }

    /// Blocks until the server thread exits (it never does on its own).
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

async fn chat(State(s): State<Arc<Shared>>, headers: HeaderMap, body: String) -> Response {
    handle(&s, &headers, &body, true)
}

async fn completion(State(s): State<Arc<Shared>>, headers: HeaderMap, body: String) -> Response {
    handle(&s, &headers, &body, false)
}

fn error(status: StatusCode, msg: &str) -> Response {
    (status, Json(json!({"error": {"message": msg}}))).into_response()
}

fn handle(s: &Shared, headers: &HeaderMap, body: &str, chat: bool) -> Response {
    s.requests.fetch_add(1, Ordering::SeqCst);
    if let Some(token) = &s.behavior.required_token {
        let ok = headers
            .get("authorization")
            .and_then(|v| v.to_str().ok())
            .is_some_and(|v| v == format!("Bearer {token}"));
        if !ok {
            return error(StatusCode::UNAUTHORIZED, "invalid api key");
        }
    }
    let Ok(req) = serde_json::from_str::<Value>(body) else {
        return error(StatusCode::BAD_REQUEST, "body is not JSON");
    };
    let prompt = if chat {
        req["messages"]
            .as_array()
            .and_then(|m| m.iter().rev().find(|m| m["role"] == "user"))
            .and_then(|m| m["content"].as_str())
    } else {
        req["prompt"].as_str()
    };
    let Some(prompt) = prompt else {
        return error(StatusCode::BAD_REQUEST, "no prompt");
    };
    if s.behavior.always_fail.iter().any(|p| p == prompt) {
        return error(StatusCode::INTERNAL_SERVER_ERROR, "injected failure");
    }
    if s.behavior.rate_limit_first > 0 {
        let mut seen = s.seen.lock().expect("mock state");
        let n = seen.entry(prompt.to_string()).or_insert(0);
        if *n < s.behavior.rate_limit_first {
            *n += 1;
            return error(StatusCode::TOO_MANY_REQUESTS, "slow down");
        }
    }
    if s.behavior.malformed.iter().any(|p| p == prompt) {
        return (StatusCode::OK, Json(json!({"object": "nothing"}))).into_response();
    }
    let text = canned_completion(prompt);
    let model = req["model"].as_str().unwrap_or("mock");
    let choice = if chat {
        json!({"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"})
    } else {
        json!({"index": 0, "text": text, "finish_reason": "stop"})
    };
    (
        StatusCode::OK,
        Json(json!({"id": "mock", "object": "completion", "model": model, "choices": [choice]})),
    )
        .into_response()
}
