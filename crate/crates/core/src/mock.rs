//! In-process mock of an OpenAI-compatible model service.
//!
//! Serves `/chat/completions` through a scripted handler and `/embeddings`
//! through a deterministic embedder. Each request runs on its own thread, so
//! scripted delays do not serialize concurrent callers.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

/// What the mock saw in a chat request.
#[derive(Debug, Clone)]
pub struct MockRequest {
    pub model: String,
    pub prompt: String,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u64>,
    pub authorization: Option<String>,
}

#[derive(Debug, Clone)]
pub struct MockReply {
    status: u16,
    body: Body,
    delay: Duration,
}

#[derive(Debug, Clone)]
enum Body {
    Completion(String),
    Raw(String),
}

impl MockReply {
    /// A 200 response whose first choice carries `text`.
    pub fn text(text: impl Into<String>) -> Self {
        MockReply {
            status: 200,
            body: Body::Completion(text.into()),
            delay: Duration::ZERO,
        }
    }

    /// An error status with a short JSON error body.
    pub fn status(status: u16) -> Self {
        MockReply {
            status,
            body: Body::Raw(json!({"error": {"message": "scripted failure"}}).to_string()),
            delay: Duration::ZERO,
        }
    }

    pub fn raw(status: u16, body: impl Into<String>) -> Self {
        MockReply {
            status,
            body: Body::Raw(body.into()),
            delay: Duration::ZERO,
        }
    }

    pub fn delay_ms(mut self, ms: u64) -> Self {
        self.delay = Duration::from_millis(ms);
        self
    }
}

type ChatHandler = dyn Fn(&MockRequest) -> MockReply + Send + Sync;
type EmbedHandler = dyn Fn(&str) -> Vec<f64> + Send + Sync;

pub struct MockServerBuilder {
    embedder: Arc<EmbedHandler>,
}

impl MockServerBuilder {
    pub fn embedder(mut self, f: impl Fn(&str) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.embedder = Arc::new(f);
        self
    }

    pub fn start_with(
        self,
        handler: impl Fn(&MockRequest) -> MockReply + Send + Sync + 'static,
    ) -> MockServer {
        MockServer::spawn(Arc::new(handler), self.embedder)
    }
}

#[derive(Default)]
struct Counters {
    chat: AtomicUsize,
    embeddings: AtomicUsize,
}

pub struct MockServer {
    server: Arc<tiny_http::Server>,
    port: u16,
    counters: Arc<Counters>,
    worker: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn builder() -> MockServerBuilder {
        MockServerBuilder {
            embedder: Arc::new(hashed_bag_of_words),
        }
    }

    pub fn start(handler: impl Fn(&MockRequest) -> MockReply + Send + Sync + 'static) -> Self {
        Self::builder().start_with(handler)
    }

    fn spawn(chat: Arc<ChatHandler>, embed: Arc<EmbedHandler>) -> Self {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").expect("bind mock server"));
        let port = server
            .server_addr()
            .to_ip()
            .expect("mock server has an IP address")
            .port();
        let counters = Arc::new(Counters::default());
        let worker = {
            let server = server.clone();
            let counters = counters.clone();
            std::thread::spawn(move || {
                for request in server.incoming_requests() {
                    let chat = chat.clone();
                    let embed = embed.clone();
                    let counters = counters.clone();
                    std::thread::spawn(move || serve(request, &*chat, &*embed, &counters));
                }
            })
        };
        MockServer {
            server,
            port,
            counters,
            worker: Some(worker),
        }
    }

    /// Base URL to put in an endpoint config.
    pub fn url(&self) -> String {
        format!("http://127.0.0.1:{}", self.port)
    }

    pub fn chat_requests(&self) -> usize {
        self.counters.chat.load(Ordering::SeqCst)
    }

    pub fn embedding_requests(&self) -> usize {
        self.counters.embeddings.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

fn respond(request: tiny_http::Request, status: u16, body: String) {
    let header = tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..])
        .expect("static header");
    let resp = tiny_http::Response::from_string(body)
        .with_status_code(status)
        .with_header(header);
    let _ = request.respond(resp);
}

fn serve(
    mut request: tiny_http::Request,
    chat: &ChatHandler,
    embed: &EmbedHandler,
    counters: &Counters,
) {
    let mut raw = String::new();
    if request.as_reader().read_to_string(&mut raw).is_err() {
        return respond(request, 400, "{}".into());
    }
    let body: Value = serde_json::from_str(&raw).unwrap_or(Value::Null);
    let path = request.url().to_string();
    if path.ends_with("/chat/completions") {
        counters.chat.fetch_add(1, Ordering::SeqCst);
        let req = MockRequest {
            model: body["model"].as_str().unwrap_or_default().to_string(),
            prompt: body
                .pointer("/messages/0/content")
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_string(),
            temperature: body["temperature"].as_f64(),
            max_tokens: body["max_tokens"].as_u64(),
            authorization: request
                .headers()
                .iter()
                .find(|h| h.field.equiv("Authorization"))
                .map(|h| h.value.to_string()),
        };
        let reply = chat(&req);
        if !reply.delay.is_zero() {
            std::thread::sleep(reply.delay);
        }
        let text = match reply.body {
            Body::Raw(s) => s,
            Body::Completion(content) => json!({
                "id": "mock",
                "object": "chat.completion",
                "model": req.model,
                "choices": [{
                    "index": 0,
                    "message": {"role": "assistant", "content": content},
                    "finish_reason": "stop"
                }],
                "usage": {
                    "prompt_tokens": req.prompt.split_whitespace().count(),
                    "completion_tokens": content.split_whitespace().count()
                }
            })
            .to_string(),
        };
        respond(request, reply.status, text);
    } else if path.ends_with("/embeddings") {
        counters.embeddings.fetch_add(1, Ordering::SeqCst);
        let input = body["input"].as_str().unwrap_or_default();
        let vector = embed(input);
        let text = json!({
            "object": "list",
            "data": [{"object": "embedding", "index": 0, "embedding": vector}],
            "model": body["model"],
        })
        .to_string();
        respond(request, 200, text);
    } else {
        respond(request, 404, "{}".into());
    }
}

/// Deterministic 64-dimensional embedding: lowercased whitespace tokens are
/// hashed into buckets and counted. Identical texts map to identical vectors.
pub fn hashed_bag_of_words(text: &str) -> Vec<f64> {
    let mut v = vec![0.0; 64];
    for tok in text.split_whitespace() {
        let digest = Sha256::digest(tok.to_lowercase().as_bytes());
        v[(digest[0] as usize) % 64] += 1.0;
    }
    if v.iter().all(|&x| x == 0.0) {
        v[0] = 1.0;
    }
    v
}

/// [`hashed_bag_of_words`] as an in-process embedder, no server needed.
pub fn hashed_bag_of_words_embedder(
) -> impl Fn(&str) -> Result<Vec<f64>, crate::endpoint::EndpointError> + Sync {
    |text: &str| Ok(hashed_bag_of_words(text))
}
