//! HTTP front end for claim-bound numeric verification.
//!
//! | route | |
//! |---|---|
//! | `POST /verify` | `{text, policy?, claims?}` → `{annotated_html, annotated_json, report}` |
//! | `GET /claims/{id}` | claim record, plus `provenance` when a keyring is loaded |
//! | `GET /policies` | preset policy documents and the default |
//! | `POST /chat` | `{message, session_id?, policy?}` → SSE `delta`* then `final` |
//!
//! Labels are always computed here, after generation; nothing in generated
//! text can set them.

pub mod generator;
pub mod session;

use std::convert::Infallible;
use std::future::Future;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::value::RawValue;
use serde_json::{json, Value};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use pcn_core::claim::ClaimRecordOut;
use pcn_core::provenance::check_provenance;
use pcn_core::render::{render_html, RenderOptions};
use pcn_core::{
    index_claims, load_claims, parse_policy, preset, summarize, AnnotatedDocument, Claim, ClaimIndex, ClaimLookup,
    ClaimSet, Keyring, Layered, PolicySpec, UnitTable, Verifier, PRESETS,
};

pub use generator::{Generation, Generator, GeneratorError, MockScript, ProxyConfig};
pub use session::{SessionStore, DEFAULT_SESSION_CAPACITY};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Unavailable(String),
}

impl ServiceError {
    fn status(&self) -> StatusCode {
        match self {
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Unavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        (self.status(), Json(json!({ "error": self.to_string() }))).into_response()
    }
}

/// Server-side claims and the keyring used to check their provenance.
/// Swapped as a whole on reload.
#[derive(Debug, Clone, Default)]
pub struct ClaimStore {
    pub claims: ClaimIndex,
    pub keyring: Option<Keyring>,
}

impl ClaimStore {
    pub fn new(claims: ClaimIndex, keyring: Option<Keyring>) -> Self {
        ClaimStore { claims, keyring }
    }

    fn verifier(&self) -> Verifier {
        match &self.keyring {
            Some(k) => Verifier::default().with_keyring(k.clone()),
            None => Verifier::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub store: ClaimStore,
    pub default_policy: PolicySpec,
    pub generator: Generator,
    pub session_capacity: usize,
    /// Allowed browser origin; any origin when unset.
    pub cors_origin: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            store: ClaimStore::default(),
            default_policy: PolicySpec::strict(),
            generator: Generator::Mock(MockScript::gdp_growth()),
            session_capacity: DEFAULT_SESSION_CAPACITY,
            cors_origin: None,
        }
    }
}

pub struct AppState {
    store: RwLock<Arc<ClaimStore>>,
    sessions: Mutex<SessionStore>,
    default_policy: PolicySpec,
    generator: Generator,
    cors_origin: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyRequest {
    pub text: String,
    /// Preset name, or an inline policy document (object or JSON string).
    #[serde(default)]
    pub policy: Option<Box<RawValue>>,
    /// Claim file or retriever payload, visible to this request only.
    #[serde(default)]
    pub claims: Option<Box<RawValue>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatRequest {
    pub message: String,
    #[serde(default)]
    pub session_id: Option<String>,
    #[serde(default)]
    pub policy: Option<Box<RawValue>>,
}

#[derive(Debug, Deserialize)]
struct ClaimQuery {
    session_id: Option<String>,
}

/// The body shared by `/verify` responses and the final `/chat` event.
pub fn annotation_body(doc: &AnnotatedDocument) -> Value {
    json!({
        "annotated_html": render_html(doc, &RenderOptions::default()),
        "annotated_json": doc.to_json_value(),
        "report": summarize(doc).to_json_value(),
    })
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Arc<Self> {
        Arc::new(AppState {
            store: RwLock::new(Arc::new(config.store)),
            sessions: Mutex::new(SessionStore::new(config.session_capacity)),
            default_policy: config.default_policy,
            generator: config.generator,
            cors_origin: config.cors_origin,
        })
    }

    pub fn store(&self) -> Arc<ClaimStore> {
        self.store.read().expect("store lock").clone()
    }

    /// Replaces the claim store; requests in flight keep the old snapshot.
    pub fn replace_store(&self, store: ClaimStore) {
        *self.store.write().expect("store lock") = Arc::new(store);
    }

    pub fn default_policy(&self) -> &PolicySpec {
        &self.default_policy
    }

    fn policy(&self, field: Option<&RawValue>) -> Result<PolicySpec, ServiceError> {
        let Some(raw) = field else {
            return Ok(self.default_policy.clone());
        };
        let spec = match serde_json::from_str::<String>(raw.get()) {
            Ok(text) => text,
            Err(_) => raw.get().to_string(),
        };
        parse_policy(&spec).map_err(|e| ServiceError::BadRequest(format!("policy: {e}")))
    }

    pub fn verify(&self, request: &VerifyRequest) -> Result<Value, ServiceError> {
        let policy = self.policy(request.policy.as_deref())?;
        let store = self.store();
        let inline = match &request.claims {
            Some(raw) => {
                let set = load_claims(raw.get().as_bytes(), &UnitTable::default())
                    .map_err(|e| ServiceError::BadRequest(format!("claims: {e}")))?;
                check_conflicts(&set, &store.claims)?;
                index_claims(set)
            }
            None => ClaimIndex::default(),
        };
        let layers = [&store.claims, &inline];
        let doc = store.verifier().verify(&request.text, &Layered::new(&layers), &policy);
        Ok(annotation_body(&doc))
    }

    pub fn claim(&self, claim_id: &str, session_id: Option<&str>) -> Result<Value, ServiceError> {
        let store = self.store();
        let claim = match store.claims.lookup(claim_id) {
            Some(c) => c.clone(),
            None => session_id
                .and_then(|s| self.sessions.lock().expect("session lock").lookup(s, claim_id))
                .ok_or_else(|| ServiceError::NotFound(format!("unknown claim `{claim_id}`")))?,
        };
        let mut body = serde_json::to_value(ClaimRecordOut::from(&claim)).expect("claim serializes");
        if let Some(keyring) = &store.keyring {
            body["provenance"] = serde_json::to_value(check_provenance(&claim, keyring)).expect("status serializes");
        }
        Ok(body)
    }

    pub fn policies(&self) -> Value {
        let mut docs: Vec<Value> = PRESETS.iter().filter_map(|n| preset(n)).map(|p| p.to_json()).collect();
        let default = self.default_policy.to_json();
        if !docs.contains(&default) {
            docs.push(default);
        }
        json!({ "default": self.default_policy.name, "policies": docs })
    }

    /// Generates, registers the generation's claims with the session, and
    /// verifies. Returns the session id, the text to stream and the final body.
    pub async fn chat(&self, request: &ChatRequest) -> Result<(String, String, Value), ServiceError> {
        if request.message.trim().is_empty() {
            return Err(ServiceError::BadRequest("message must not be empty".to_string()));
        }
        let policy = self.policy(request.policy.as_deref())?;
        let generation = self
            .generator
            .generate(&request.message)
            .await
            .map_err(|e| ServiceError::Unavailable(e.to_string()))?;
        let session_id = request.session_id.clone().unwrap_or_else(new_session_id);
        let session = self
            .sessions
            .lock()
            .expect("session lock")
            .register(&session_id, generation.claims);
        let store = self.store();
        let layers = [&store.claims, &session];
        let doc = store
            .verifier()
            .verify(&generation.text, &Layered::new(&layers), &policy);
        let mut body = annotation_body(&doc);
        body["session_id"] = session_id.clone().into();
        Ok((session_id, doc.source(), body))
    }
}

/// An inline claim may repeat a server claim only if they are identical.
fn check_conflicts(inline: &ClaimSet, server: &ClaimIndex) -> Result<(), ServiceError> {
    for claim in inline.claims() {
        if let Some(existing) = server.lookup(&claim.claim_id) {
            if !same_claim(existing, claim) {
                return Err(ServiceError::BadRequest(format!(
                    "claims: `{}` conflicts with a server claim",
                    claim.claim_id
                )));
            }
        }
    }
    Ok(())
}

fn same_claim(a: &Claim, b: &Claim) -> bool {
    a.indicator == b.indicator && a.entity == b.entity && a.time == b.time && a.value == b.value && a.unit == b.unit
}

fn new_session_id() -> String {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let nanos = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_nanos())
        .unwrap_or(0);
    format!("s{:x}{:04x}", nanos, COUNTER.fetch_add(1, Ordering::Relaxed) & 0xffff)
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(format!("malformed body: {e}")))
}

/// Splits text into word-sized pieces at char boundaries, keeping spacing.
fn deltas(text: &str) -> Vec<String> {
    text.split_inclusive(char::is_whitespace).map(str::to_string).collect()
}

async fn post_verify(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<Value>, ServiceError> {
    let request: VerifyRequest = parse_body(&body)?;
    state.verify(&request).map(Json)
}

async fn get_claim(
    State(state): State<Arc<AppState>>,
    Path(claim_id): Path<String>,
    Query(query): Query<ClaimQuery>,
) -> Result<Json<Value>, ServiceError> {
    state.claim(&claim_id, query.session_id.as_deref()).map(Json)
}

async fn get_policies(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(state.policies())
}

async fn post_chat(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ServiceError> {
    let request: ChatRequest = parse_body(&body)?;
    let (_, text, final_body) = state.chat(&request).await?;
    let mut events: Vec<Result<Event, Infallible>> = deltas(&text)
        .into_iter()
        .map(|piece| {
            Ok(Event::default()
                .event("delta")
                .data(json!({ "text": piece }).to_string()))
        })
        .collect();
    events.push(Ok(Event::default().event("final").data(final_body.to_string())));
    Ok(Sse::new(futures::stream::iter(events))
        .keep_alive(KeepAlive::default())
        .into_response())
}

pub fn router(state: Arc<AppState>) -> Router {
    let origin = match state.cors_origin.as_deref().map(HeaderValue::from_str) {
        Some(Ok(value)) => AllowOrigin::exact(value),
        Some(Err(_)) => {
            tracing::warn!("ignoring unparseable CORS origin");
            AllowOrigin::from(Any)
        }
        None => AllowOrigin::from(Any),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    Router::new()
        .route("/verify", post(post_verify))
        .route("/claims/{id}", get(get_claim))
        .route("/policies", get(get_policies))
        .route("/chat", post(post_chat))
        .layer(cors)
        .with_state(state)
}

pub type Reloader = Arc<dyn Fn() -> Result<ClaimStore, String> + Send + Sync>;

/// Serves until `shutdown` resolves. With a reloader, SIGHUP rebuilds the
/// claim store; a failed reload keeps the current one.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    reload: Option<Reloader>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    if let Some(reload) = reload {
        spawn_reload_on_hangup(state.clone(), reload)?;
    }
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

#[cfg(unix)]
fn spawn_reload_on_hangup(state: Arc<AppState>, reload: Reloader) -> std::io::Result<()> {
    use tokio::signal::unix::{signal, SignalKind};
    let mut hangups = signal(SignalKind::hangup())?;
    tokio::spawn(async move {
        while hangups.recv().await.is_some() {
            match reload() {
                Ok(store) => {
                    tracing::info!(claims = store.claims.len(), "claim store reloaded");
                    state.replace_store(store);
                }
                Err(e) => tracing::warn!("reload failed, keeping current claims: {e}"),
            }
        }
    });
    Ok(())
}

#[cfg(not(unix))]
fn spawn_reload_on_hangup(_: Arc<AppState>, _: Reloader) -> std::io::Result<()> {
    Ok(())
}

/// Resolves on Ctrl-C, or SIGTERM on unix.
pub async fn shutdown_signal() {
    let interrupt = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = interrupt => {},
        _ = terminate => {},
    }
}
