//! Scripted chat-completion server for fault-injection tests.
//!
//! Each request first consumes a fault from the script registered for its
//! correlation id, then from the global script; with no fault left it is
//! answered by the backing [`Responder`]. The server records request bodies
//! and the peak number of concurrently open requests.

use std::collections::{HashMap, HashSet, VecDeque};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::Router;
use tokio::sync::oneshot;

use crate::client::CORRELATION_HEADER;
use crate::{CompletionRequest, Responder};

#[derive(Clone, Debug, PartialEq)]
pub enum Fault {
    Status(u16),
    /// Status with a `Retry-After` header in seconds.
    RetryAfter(u16, u64),
    /// Sleep before answering normally; longer than the client timeout this
    /// is a timeout.
    Delay(Duration),
    /// 200 with a body that is not a chat completion.
    Malformed,
}

struct Shared {
    backend: Arc<dyn Responder>,
    latency: Duration,
    global: Mutex<VecDeque<Fault>>,
    per_id: Mutex<HashMap<String, VecDeque<Fault>>>,
    always_fail: Mutex<HashSet<String>>,
    requests: AtomicUsize,
    open: AtomicUsize,
    peak: AtomicUsize,
    bodies: Mutex<Vec<(Option<String>, Vec<u8>)>>,
}

struct OpenGuard<'a>(&'a Shared);

impl Drop for OpenGuard<'_> {
    fn drop(&mut self) {
        self.0.open.fetch_sub(1, Ordering::SeqCst);
    }
}

pub struct MockServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    stop: Option<oneshot::Sender<()>>,
}

impl MockServer {
    /// Binds to an ephemeral local port. Every answer waits `latency` first.
    pub async fn start(backend: Arc<dyn Responder>, latency: Duration) -> std::io::Result<Self> {
        let shared = Arc::new(Shared {
            backend,
            latency,
            global: Mutex::default(),
            per_id: Mutex::default(),
            always_fail: Mutex::default(),
            requests: AtomicUsize::new(0),
            open: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
            bodies: Mutex::default(),
        });
        let app = Router::new().route("/v1/chat/completions", post(handle)).with_state(shared.clone());
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
        let addr = listener.local_addr()?;
        let (stop, stopped) = oneshot::channel::<()>();
        tokio::spawn(async move {
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = stopped.await;
                })
                .await;
        });
        Ok(MockServer { addr, shared, stop: Some(stop) })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn push_faults(&self, faults: impl IntoIterator<Item = Fault>) {
        self.shared.global.lock().unwrap().extend(faults);
    }

    pub fn push_faults_for(&self, correlation_id: &str, faults: impl IntoIterator<Item = Fault>) {
        self.shared.per_id.lock().unwrap().entry(correlation_id.to_owned()).or_default().extend(faults);
    }

    /// Every request with this correlation id gets a 500.
    pub fn fail_always(&self, correlation_id: &str) {
        self.shared.always_fail.lock().unwrap().insert(correlation_id.to_owned());
    }

    pub fn requests(&self) -> usize {
        self.shared.requests.load(Ordering::SeqCst)
    }

    pub fn peak_in_flight(&self) -> usize {
        self.shared.peak.load(Ordering::SeqCst)
    }

    /// `(correlation id, body)` of every request in arrival order.
    pub fn bodies(&self) -> Vec<(Option<String>, Vec<u8>)> {
        self.shared.bodies.lock().unwrap().clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
    }
}

fn completion(text: &str) -> Response {
    let body = serde_json::json!({
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
    });
    (StatusCode::OK, [("content-type", "application/json")], body.to_string()).into_response()
}

fn status(code: u16) -> StatusCode {
    StatusCode::from_u16(code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR)
}

async fn handle(State(shared): State<Arc<Shared>>, headers: HeaderMap, body: Bytes) -> Response {
    shared.requests.fetch_add(1, Ordering::SeqCst);
    let now_open = shared.open.fetch_add(1, Ordering::SeqCst) + 1;
    shared.peak.fetch_max(now_open, Ordering::SeqCst);
    let _guard = OpenGuard(&shared);

    let correlation = headers.get(CORRELATION_HEADER).and_then(|v| v.to_str().ok()).map(str::to_owned);
    shared.bodies.lock().unwrap().push((correlation.clone(), body.to_vec()));

    let fault = {
        let scripted = correlation
            .as_ref()
            .and_then(|id| shared.per_id.lock().unwrap().get_mut(id).and_then(VecDeque::pop_front));
        scripted.or_else(|| shared.global.lock().unwrap().pop_front())
    };
    let always_fail = correlation.as_ref().is_some_and(|id| shared.always_fail.lock().unwrap().contains(id));

    tokio::time::sleep(shared.latency).await;
    match fault {
        Some(Fault::Status(code)) => return (status(code), "scripted failure").into_response(),
        Some(Fault::RetryAfter(code, secs)) => {
            return (status(code), [("retry-after", secs.to_string())], "slow down").into_response()
        }
        Some(Fault::Malformed) => return (StatusCode::OK, "{\"unexpected\": true}").into_response(),
        Some(Fault::Delay(d)) => tokio::time::sleep(d).await,
        None => {}
    }
    if always_fail {
        return (StatusCode::INTERNAL_SERVER_ERROR, "endpoint down").into_response();
    }

    let prompt = serde_json::from_slice::<serde_json::Value>(&body)
        .ok()
        .and_then(|v| v["messages"][0]["content"].as_str().map(str::to_owned))
        .unwrap_or_default();
    match shared.backend.complete(&CompletionRequest { prompt, correlation_id: correlation }).await {
        Ok(r) => completion(&r.text),
        Err(e) => (StatusCode::BAD_REQUEST, e.to_string()).into_response(),
    }
}

/// Backend that answers every prompt with the same text.
pub struct FixedReply(pub String);

#[async_trait::async_trait]
impl Responder for FixedReply {
    async fn complete(&self, _req: &CompletionRequest) -> Result<crate::CompletionResult, crate::ClientError> {
        Ok(crate::CompletionResult { text: self.0.clone(), latency_ms: 0, attempts: 1 })
    }
}
