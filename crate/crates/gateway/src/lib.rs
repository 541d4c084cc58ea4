//! HTTP gateway in front of the enforcement engine. Object reads stream
//! through the policy chain; the stored object is never modified and
//! transformed views are never written back.
//!
//! Surface:
//!   GET/PUT  /v1/{account}/{container}/{*object}   object read (enforced) / upload
//!   PUT      /v1/policies                          compile + store a policy
//!   GET      /v1/policies                          list ids
//!   GET      /v1/policies/{id}                     original JSON document
//!   DELETE   /v1/policies/{id}
//!   PUT/GET/DELETE /v1/meta/{*key}                 key material, labels
//!   GET      /healthz
//!
//! Every route except /healthz requires `X-Auth-Token`, resolved against a
//! static token table. `policies` and `meta` are reserved account names.

// Handlers return Response directly in the error position; the size is the
// cost of axum's type, not a structural problem.
#![allow(clippy::result_large_err)]

pub mod backend;

use std::collections::HashMap;
use std::io::{self, Read, Write};
use std::path::{Path as FsPath, PathBuf};
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{any, get, put};
use axum::{Json, Router};
use serde::Deserialize;
use tokio::sync::{mpsc, oneshot};
use tokio_stream::wrappers::ReceiverStream;
use tokio_stream::StreamExt;

use objectlens_core::crypto::DEFAULT_PLAINTEXT_BOUND;
use objectlens_core::engine::{headers as eng_headers, Engine, EngineConfig, EngineError};
use objectlens_core::policy::ObjectPath;
use objectlens_core::EnforcementRequest;

use backend::ObjectBackend;

/// Store key under which the gateway advertises its configured plaintext
/// bound, so decrypting clients can discover it instead of hardcoding one.
pub const PLAINTEXT_BOUND_KEY: &str = "config/plaintext-bound";

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    /// Listen address, e.g. "127.0.0.1:9870".
    #[serde(default = "default_listen")]
    pub listen: String,
    /// Filesystem backend root.
    #[serde(default = "default_backend_root")]
    pub backend_root: PathBuf,
    /// TOML file with a `[tokens]` table mapping bearer token to user id.
    pub token_table: Option<PathBuf>,
    /// Compiled policies kept in memory; 0 disables the cache.
    #[serde(default = "default_cache_capacity")]
    pub cache_capacity: usize,
    /// Exclusive upper bound on homomorphic plaintexts, advertised to
    /// clients under `config/plaintext-bound`.
    #[serde(default = "default_plaintext_bound")]
    pub plaintext_bound: u64,
    /// Where to persist the metadata store; in-memory only when unset.
    pub metadata_path: Option<PathBuf>,
}

fn default_listen() -> String {
    "127.0.0.1:9870".to_string()
}
fn default_backend_root() -> PathBuf {
    PathBuf::from("./objects")
}
fn default_cache_capacity() -> usize {
    128
}
fn default_plaintext_bound() -> u64 {
    DEFAULT_PLAINTEXT_BOUND
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            listen: default_listen(),
            backend_root: default_backend_root(),
            token_table: None,
            cache_capacity: default_cache_capacity(),
            plaintext_bound: default_plaintext_bound(),
            metadata_path: None,
        }
    }
}

impl GatewayConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TokenFile {
    tokens: HashMap<String, String>,
}

/// Loads the `[tokens]` table mapping bearer token to user id.
pub fn load_tokens(path: &FsPath) -> io::Result<HashMap<String, String>> {
    let text = std::fs::read_to_string(path)?;
    let file: TokenFile = toml::from_str(&text)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))?;
    Ok(file.tokens)
}

#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<Engine>,
    pub backend: Arc<dyn ObjectBackend>,
    pub tokens: Arc<HashMap<String, String>>,
    /// Metadata snapshot target; written after each mutating call.
    pub metadata_path: Option<Arc<PathBuf>>,
}

impl AppState {
    pub fn new(
        engine: Arc<Engine>,
        backend: Arc<dyn ObjectBackend>,
        tokens: HashMap<String, String>,
    ) -> Self {
        AppState {
            engine,
            backend,
            tokens: Arc::new(tokens),
            metadata_path: None,
        }
    }

    fn persist(&self) {
        if let Some(path) = &self.metadata_path {
            if let Err(e) = self.engine.store().save_to(path) {
                tracing::warn!(path = %path.display(), error = %e, "metadata snapshot failed");
            }
        }
    }
}

/// Builds the full route table over shared state.
pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(|| async { "ok\n" }))
        .route("/v1/policies", put(put_policy).get(list_policies))
        .route("/v1/policies/{id}", get(get_policy).delete(delete_policy))
        .route("/v1/meta/{*key}", put(put_meta).get(get_meta).delete(delete_meta))
        .route("/v1/{account}", any(malformed_path))
        .route("/v1/{account}/{container}", any(malformed_path))
        .route(
            "/v1/{account}/{container}/{*object}",
            get(get_object).put(put_object),
        )
        .with_state(state)
}

fn authenticate(state: &AppState, headers: &HeaderMap) -> Result<String, Response> {
    headers
        .get(eng_headers::AUTH_TOKEN)
        .and_then(|v| v.to_str().ok())
        .and_then(|t| state.tokens.get(t))
        .cloned()
        .ok_or_else(|| (StatusCode::UNAUTHORIZED, "unknown or missing token\n").into_response())
}

fn object_path(account: &str, container: &str, object: &str) -> Result<ObjectPath, Response> {
    ObjectPath::new(account, container, object)
        .map_err(|e| (StatusCode::BAD_REQUEST, format!("{e}\n")).into_response())
}

async fn malformed_path() -> Response {
    (
        StatusCode::BAD_REQUEST,
        "object paths take the form /v1/{account}/{container}/{object}\n",
    )
        .into_response()
}

fn content_type(object: &str) -> &'static str {
    if object.ends_with(".json") {
        "application/json"
    } else if object.ends_with(".csv") {
        "text/csv"
    } else {
        "application/octet-stream"
    }
}

/// Maps enforcement failures for GET. Everything that is not provably the
/// client's own malformed input collapses to 403 so error detail cannot be
/// used to probe policy internals; specifics go to the log.
fn enforcement_error(e: &EngineError) -> Response {
    match e {
        EngineError::BadRequest(m) => (StatusCode::BAD_REQUEST, format!("{m}\n")).into_response(),
        EngineError::Storage(io) if io.kind() == io::ErrorKind::NotFound => {
            (StatusCode::NOT_FOUND, "no such object\n").into_response()
        }
        EngineError::Storage(io) if io.kind() == io::ErrorKind::InvalidInput => {
            (StatusCode::BAD_REQUEST, format!("{io}\n")).into_response()
        }
        EngineError::Storage(io) => {
            tracing::error!(error = %io, "backend failure");
            (StatusCode::BAD_GATEWAY, "backend failure\n").into_response()
        }
        other => {
            tracing::warn!(error = %other, "request denied");
            (StatusCode::FORBIDDEN, "access denied\n").into_response()
        }
    }
}

struct ViewHead {
    transformed: bool,
    policy_id: Option<String>,
}

const CHUNK: usize = 64 * 1024;

/// `io::Write` half of the blocking-to-async bridge: enforcement runs on a
/// blocking thread and pushes chunks into a bounded channel the response
/// body drains. The bound gives backpressure, so a slow client stalls the
/// backend read instead of buffering the object.
struct ChannelSink {
    tx: mpsc::Sender<Result<Bytes, io::Error>>,
    buf: Vec<u8>,
}

impl ChannelSink {
    fn new(tx: mpsc::Sender<Result<Bytes, io::Error>>) -> Self {
        ChannelSink {
            tx,
            buf: Vec::with_capacity(CHUNK),
        }
    }

    fn send(&mut self, chunk: Bytes) -> io::Result<()> {
        self.tx
            .blocking_send(Ok(chunk))
            .map_err(|_| io::Error::new(io::ErrorKind::BrokenPipe, "client went away"))
    }

    /// Signals the client that the view failed mid-stream; the connection
    /// is torn down rather than ending the body cleanly.
    fn abort(self, reason: String) {
        let _ = self.tx.blocking_send(Err(io::Error::other(reason)));
    }
}

impl Write for ChannelSink {
    fn write(&mut self, data: &[u8]) -> io::Result<usize> {
        self.buf.extend_from_slice(data);
        while self.buf.len() >= CHUNK {
            let rest = self.buf.split_off(CHUNK);
            let chunk = std::mem::replace(&mut self.buf, rest);
            self.send(Bytes::from(chunk))?;
        }
        Ok(data.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        if !self.buf.is_empty() {
            let chunk = std::mem::take(&mut self.buf);
            self.send(Bytes::from(chunk))?;
        }
        Ok(())
    }
}

/// `io::Read` half of the bridge for uploads: the handler forwards body
/// chunks into the channel while the backend write drains it.
struct ChannelSource {
    rx: mpsc::Receiver<Bytes>,
    current: Bytes,
}

impl ChannelSource {
    fn new(rx: mpsc::Receiver<Bytes>) -> Self {
        ChannelSource {
            rx,
            current: Bytes::new(),
        }
    }
}

impl Read for ChannelSource {
    fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
        while self.current.is_empty() {
            match self.rx.blocking_recv() {
                Some(chunk) => self.current = chunk,
                None => return Ok(0),
            }
        }
        let n = self.current.len().min(out.len());
        out[..n].copy_from_slice(&self.current[..n]);
        self.current = self.current.slice(n..);
        Ok(n)
    }
}

async fn get_object(
    State(state): State<AppState>,
    Path((account, container, object)): Path<(String, String, String)>,
    headers: HeaderMap,
) -> Response {
    let user = match authenticate(&state, &headers) {
        Ok(u) => u,
        Err(r) => return r,
    };
    let path = match object_path(&account, &container, &object) {
        Ok(p) => p,
        Err(r) => return r,
    };
    match state.backend.stat(&path) {
        Ok(_) => {}
        Err(e) => return enforcement_error(&EngineError::Storage(e)),
    }

    let mut ereq = EnforcementRequest::new(path, &user);
    for (name, value) in headers.iter() {
        if name.as_str().eq_ignore_ascii_case(eng_headers::AUTH_TOKEN) {
            continue;
        }
        if let Ok(v) = value.to_str() {
            ereq = ereq.with_header(name.as_str(), v);
        }
    }

    let (head_tx, head_rx) = oneshot::channel::<Result<ViewHead, EngineError>>();
    let (chunk_tx, chunk_rx) = mpsc::channel::<Result<Bytes, io::Error>>(16);
    let engine = state.engine.clone();
    let backend = state.backend.clone();

    // The observer chain is not Send, so prepare and run stay on one
    // blocking thread; only the status crosses back before the body.
    tokio::task::spawn_blocking(move || {
        let prepared = match engine.prepare(&ereq) {
            Ok(p) => p,
            Err(e) => {
                let _ = head_tx.send(Err(e));
                return;
            }
        };
        let mut source = match backend.read(&ereq.path) {
            Ok(s) => s,
            Err(e) => {
                let _ = head_tx.send(Err(EngineError::Storage(e)));
                return;
            }
        };
        let head = ViewHead {
            transformed: prepared.is_transformed(),
            policy_id: prepared.policy_id().map(str::to_string),
        };
        if head_tx.send(Ok(head)).is_err() {
            return;
        }
        let mut sink = ChannelSink::new(chunk_tx);
        match prepared.run(source.as_mut(), &mut sink) {
            Ok(stats) => {
                if let Err(e) = sink.flush() {
                    tracing::debug!(error = %e, "view dropped by client");
                    return;
                }
                tracing::info!(
                    user = %ereq.user_id,
                    object = %ereq.path.object,
                    policy = stats.policy_id.as_deref().unwrap_or("-"),
                    bytes_in = stats.bytes_in,
                    bytes_out = stats.bytes_out,
                    events = stats.events_emitted,
                    "view served"
                );
            }
            Err(e) => {
                tracing::warn!(
                    user = %ereq.user_id,
                    object = %ereq.path.object,
                    error = %e,
                    "view aborted mid-stream"
                );
                sink.abort(format!("view aborted: {e}"));
            }
        }
    });

    match head_rx.await {
        Ok(Ok(head)) => {
            let mut resp = Response::builder()
                .status(StatusCode::OK)
                .header("content-type", content_type(&object))
                .header(
                    "x-view-transformed",
                    if head.transformed { "true" } else { "false" },
                );
            if let Some(id) = head.policy_id {
                resp = resp.header("x-policy-id", id);
            }
            resp.body(Body::from_stream(ReceiverStream::new(chunk_rx)))
                .expect("static response parts are valid")
        }
        Ok(Err(e)) => enforcement_error(&e),
        Err(_) => (StatusCode::BAD_GATEWAY, "enforcement task failed\n").into_response(),
    }
}

async fn put_object(
    State(state): State<AppState>,
    Path((account, container, object)): Path<(String, String, String)>,
    headers: HeaderMap,
    body: Body,
) -> Response {
    if let Err(r) = authenticate(&state, &headers) {
        return r;
    }
    let path = match object_path(&account, &container, &object) {
        Ok(p) => p,
        Err(r) => return r,
    };

    let (tx, rx) = mpsc::channel::<Bytes>(16);
    let backend = state.backend.clone();
    let target = path.clone();
    let writer = tokio::task::spawn_blocking(move || {
        let mut source = ChannelSource::new(rx);
        backend.write(&target, &mut source)
    });

    let mut stream = body.into_data_stream();
    let mut body_error = None;
    while let Some(next) = stream.next().await {
        match next {
            Ok(chunk) => {
                if tx.send(chunk).await.is_err() {
                    break;
                }
            }
            Err(e) => {
                body_error = Some(e);
                break;
            }
        }
    }
    drop(tx);

    let written = writer.await;
    if let Some(e) = body_error {
        return (StatusCode::BAD_REQUEST, format!("request body: {e}\n")).into_response();
    }
    match written {
        Ok(Ok(n)) => (StatusCode::CREATED, format!("{n}\n")).into_response(),
        Ok(Err(e)) if e.kind() == io::ErrorKind::InvalidInput => {
            (StatusCode::BAD_REQUEST, format!("{e}\n")).into_response()
        }
        Ok(Err(e)) if e.kind() == io::ErrorKind::StorageFull || e.raw_os_error() == Some(28) => {
            (StatusCode::INSUFFICIENT_STORAGE, "storage full\n").into_response()
        }
        Ok(Err(e)) => {
            tracing::error!(error = %e, "object write failed");
            (StatusCode::BAD_GATEWAY, "backend failure\n").into_response()
        }
        Err(_) => (StatusCode::BAD_GATEWAY, "write task failed\n").into_response(),
    }
}

async fn put_policy(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    if let Err(r) = authenticate(&state, &headers) {
        return r;
    }
    match state.engine.put_policy(&body) {
        Ok(summary) => {
            state.persist();
            (
                StatusCode::CREATED,
                Json(serde_json::json!({
                    "id": summary.id,
                    "object": summary.object_pattern,
                    "steps": summary.steps,
                })),
            )
                .into_response()
        }
        Err(e) => (StatusCode::BAD_REQUEST, format!("{e}\n")).into_response(),
    }
}

async fn list_policies(State(state): State<AppState>, headers: HeaderMap) -> Response {
    if let Err(r) = authenticate(&state, &headers) {
        return r;
    }
    let mut ids = state.engine.list_policies();
    ids.sort();
    Json(ids).into_response()
}

async fn get_policy(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Response {
    if let Err(r) = authenticate(&state, &headers) {
        return r;
    }
    match state.engine.get_policy_source(&id) {
        Ok(bytes) => (
            StatusCode::OK,
            [("content-type", "application/json")],
            bytes,
        )
            .into_response(),
        Err(_) => (StatusCode::NOT_FOUND, "no such policy\n").into_response(),
    }
}

async fn delete_policy(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Response {
    if let Err(r) = authenticate(&state, &headers) {
        return r;
    }
    match state.engine.delete_policy(&id) {
        Ok(()) => {
            state.persist();
            StatusCode::NO_CONTENT.into_response()
        }
        Err(_) => (StatusCode::NOT_FOUND, "no such policy\n").into_response(),
    }
}

/// Policies must go through the validated endpoint, never raw meta writes.
fn meta_key_guard(key: &str) -> Result<(), Response> {
    if key == "policies" || key.starts_with("policies/") {
        return Err((
            StatusCode::BAD_REQUEST,
            "policy entries are managed via /v1/policies\n",
        )
            .into_response());
    }
    Ok(())
}

async fn put_meta(
    State(state): State<AppState>,
    Path(key): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    if let Err(r) = authenticate(&state, &headers) {
        return r;
    }
    if let Err(r) = meta_key_guard(&key) {
        return r;
    }
    state.engine.store().put(&key, body.to_vec());
    state.persist();
    StatusCode::NO_CONTENT.into_response()
}

async fn get_meta(
    State(state): State<AppState>,
    Path(key): Path<String>,
    headers: HeaderMap,
) -> Response {
    if let Err(r) = authenticate(&state, &headers) {
        return r;
    }
    match state.engine.store().try_get(&key) {
        Some(bytes) => (
            StatusCode::OK,
            [("content-type", "application/octet-stream")],
            bytes,
        )
            .into_response(),
        None => (StatusCode::NOT_FOUND, "no such key\n").into_response(),
    }
}

async fn delete_meta(
    State(state): State<AppState>,
    Path(key): Path<String>,
    headers: HeaderMap,
) -> Response {
    if let Err(r) = authenticate(&state, &headers) {
        return r;
    }
    if let Err(r) = meta_key_guard(&key) {
        return r;
    }
    if state.engine.store().delete(&key) {
        state.persist();
        StatusCode::NO_CONTENT.into_response()
    } else {
        (StatusCode::NOT_FOUND, "no such key\n").into_response()
    }
}

/// Assembles engine + backend + tokens from a config, creating directories
/// and loading any metadata snapshot.
pub fn build_state(config: &GatewayConfig) -> io::Result<AppState> {
    use objectlens_core::engine::MetadataStore;

    let store = match &config.metadata_path {
        Some(p) if p.exists() => MetadataStore::load_from(p)?,
        _ => MetadataStore::new(),
    };
    store.put(
        PLAINTEXT_BOUND_KEY,
        config.plaintext_bound.to_string().into_bytes(),
    );
    let engine = Arc::new(Engine::new(
        Arc::new(store),
        EngineConfig {
            cache_capacity: config.cache_capacity,
            ..EngineConfig::default()
        },
    ));
    let backend = Arc::new(backend::FsBackend::new(&config.backend_root)?);
    let tokens = match &config.token_table {
        Some(path) => load_tokens(path)?,
        None => HashMap::new(),
    };
    if tokens.is_empty() {
        tracing::warn!("token table is empty; every request will be rejected");
    }
    let mut state = AppState::new(engine, backend, tokens);
    state.metadata_path = config.metadata_path.clone().map(Arc::new);
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_overrides_parse() {
        let c = GatewayConfig::from_toml("").unwrap();
        assert_eq!(c.listen, "127.0.0.1:9870");
        assert_eq!(c.cache_capacity, 128);
        assert_eq!(c.plaintext_bound, DEFAULT_PLAINTEXT_BOUND);
        assert!(c.token_table.is_none());

        let c = GatewayConfig::from_toml(
            r#"
listen = "0.0.0.0:80"
backend_root = "/srv/objects"
token_table = "/etc/olens/tokens.toml"
cache_capacity = 4
plaintext_bound = 1024
metadata_path = "/srv/meta.bin"
"#,
        )
        .unwrap();
        assert_eq!(c.listen, "0.0.0.0:80");
        assert_eq!(c.cache_capacity, 4);
        assert_eq!(c.plaintext_bound, 1024);
        assert!(c.metadata_path.is_some());
    }

    #[test]
    fn unknown_config_keys_rejected() {
        assert!(GatewayConfig::from_toml("listne = \"x\"").is_err());
    }

    #[test]
    fn token_table_parses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tokens.toml");
        std::fs::write(&path, "[tokens]\n\"tok-a\" = \"alice\"\nplain = \"bob\"\n").unwrap();
        let t = load_tokens(&path).unwrap();
        assert_eq!(t.get("tok-a").map(String::as_str), Some("alice"));
        assert_eq!(t.get("plain").map(String::as_str), Some("bob"));
        assert_eq!(t.len(), 2);
    }
}
