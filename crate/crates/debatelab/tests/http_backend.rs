//! Wire-level tests against a local stub server: response parsing, retry
//! policy, auth handling, the in-flight cap, and the embeddings endpoint.

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use debatelab::backends::{
    BackendError, CompletionBackend, CompletionRequest, Embedder, HttpBackend, HttpEmbedder,
    RequestTag,
};
use debatelab::responders::PromptBundle;
use futures::StreamExt;
use serde_json::{json, Value};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

#[derive(Default)]
struct StubState {
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    fail_remaining: AtomicUsize,
    reject_auth: bool,
    requests: AtomicUsize,
}

async fn chat(
    State(state): State<Arc<StubState>>,
    Json(body): Json<Value>,
) -> (StatusCode, Json<Value>) {
    state.requests.fetch_add(1, Ordering::SeqCst);
    if state.reject_auth {
        return (StatusCode::UNAUTHORIZED, Json(json!({"error": "unauthorized"})));
    }
    if state
        .fail_remaining
        .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |v| v.checked_sub(1))
        .is_ok()
    {
        return (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({"error": "transient"})));
    }
    let messages = body["messages"].as_array().cloned().unwrap_or_default();
    if body["model"].as_str().is_none() || messages.is_empty() {
        return (StatusCode::BAD_REQUEST, Json(json!({"error": "malformed body"})));
    }
    let now = state.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    state.max_in_flight.fetch_max(now, Ordering::SeqCst);
    tokio::time::sleep(Duration::from_millis(25)).await;
    state.in_flight.fetch_sub(1, Ordering::SeqCst);
    let last_user = messages
        .iter()
        .rev()
        .find(|m| m["role"] == "user")
        .and_then(|m| m["content"].as_str())
        .unwrap_or("");
    (
        StatusCode::OK,
        Json(json!({
            "choices": [{"message": {"role": "assistant", "content": format!("echo: {last_user}")}}]
        })),
    )
}

async fn embeddings(
    State(state): State<Arc<StubState>>,
    Json(body): Json<Value>,
) -> (StatusCode, Json<Value>) {
    state.requests.fetch_add(1, Ordering::SeqCst);
    let inputs = body["input"].as_array().cloned().unwrap_or_default();
    let data: Vec<Value> = inputs
        .iter()
        .enumerate()
        .map(|(i, _)| json!({"embedding": [1.0, i as f64], "index": i}))
        .collect();
    (StatusCode::OK, Json(json!({"data": data})))
}

async fn spawn_stub(state: Arc<StubState>) -> String {
    let app = Router::new()
        .route("/chat/completions", post(chat))
        .route("/embeddings", post(embeddings))
        .with_state(state);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });
    format!("http://{addr}")
}

fn request(user: &str) -> CompletionRequest {
    CompletionRequest::from_bundle(
        RequestTag::Discussion,
        PromptBundle { system: "stub system".into(), user: user.into() },
        Some(1),
        0.7,
    )
}

#[tokio::test]
async fn returns_first_choice_content() {
    let state = Arc::new(StubState::default());
    let base = spawn_stub(state.clone()).await;
    let backend = HttpBackend::new(&base, "stub-model", 4);
    let reply = backend.complete(&request("hello wire")).await.unwrap();
    assert_eq!(reply, "echo: hello wire");
    assert_eq!(state.requests.load(Ordering::SeqCst), 1);
}

#[tokio::test]
async fn retries_transient_server_errors() {
    let state = Arc::new(StubState {
        fail_remaining: AtomicUsize::new(2),
        ..StubState::default()
    });
    let base = spawn_stub(state.clone()).await;
    let backend = HttpBackend::new(&base, "stub-model", 4);
    let reply = backend.complete(&request("retry me")).await.unwrap();
    assert_eq!(reply, "echo: retry me");
    assert_eq!(state.requests.load(Ordering::SeqCst), 3, "two failures plus one success");
}

#[tokio::test]
async fn gives_up_after_bounded_retries() {
    let state = Arc::new(StubState {
        fail_remaining: AtomicUsize::new(100),
        ..StubState::default()
    });
    let base = spawn_stub(state.clone()).await;
    let backend = HttpBackend::new(&base, "stub-model", 4);
    let error = backend.complete(&request("doomed")).await.unwrap_err();
    assert!(matches!(error, BackendError::Transport(_)), "{error}");
    assert_eq!(state.requests.load(Ordering::SeqCst), 3, "exactly three attempts");
}

#[tokio::test]
async fn auth_rejection_is_not_retried() {
    let state = Arc::new(StubState { reject_auth: true, ..StubState::default() });
    let base = spawn_stub(state.clone()).await;
    let backend = HttpBackend::new(&base, "stub-model", 4);
    let error = backend.complete(&request("locked out")).await.unwrap_err();
    assert!(matches!(error, BackendError::Auth(_)), "{error}");
    assert_eq!(state.requests.load(Ordering::SeqCst), 1, "credential errors are terminal");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn in_flight_cap_is_respected() {
    let state = Arc::new(StubState::default());
    let base = spawn_stub(state.clone()).await;
    let backend = Arc::new(HttpBackend::new(&base, "stub-model", 8));
    let replies: Vec<_> = futures::stream::iter(0..40)
        .map(|i| {
            let backend = backend.clone();
            async move { backend.complete(&request(&format!("req {i}"))).await }
        })
        .buffer_unordered(40)
        .collect()
        .await;
    assert!(replies.iter().all(|r| r.is_ok()));
    let observed = state.max_in_flight.load(Ordering::SeqCst);
    assert!(observed <= 8, "cap of 8 exceeded: {observed}");
    assert!(observed >= 2, "no concurrency observed at all");
}

#[tokio::test]
async fn embedder_speaks_the_embeddings_protocol() {
    let state = Arc::new(StubState::default());
    let base = spawn_stub(state.clone()).await;
    let embedder = HttpEmbedder::new(&base, "stub-embedder");
    let texts = vec!["one".to_string(), "two".to_string(), "three".to_string()];
    let vectors = embedder.embed(&texts).await.unwrap();
    assert_eq!(vectors.len(), 3);
    assert_eq!(vectors[2].0, vec![1.0, 2.0]);
}
