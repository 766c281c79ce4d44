//! HTTP front end for the Reflexa engine.
//!
//! Every mutation is applied to a copy of the session, saved, and only then
//! made visible, so the file on disk and the in-memory state never diverge
//! and a failed request changes nothing.

mod error;
mod store;

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, RawQuery, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use reflexa_core::persist;
use reflexa_core::{Engine, NodeId, ReflectionMode, SessionSettings, SessionState};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use error::ApiError;
pub use store::SessionStore;

pub struct AppState {
    pub engine: Engine,
    pub store: SessionStore,
}

impl AppState {
    pub fn new(engine: Engine, store: SessionStore) -> Arc<Self> {
        Arc::new(Self { engine, store })
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sparks", get(sparks))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/graph", get(get_graph))
        .route("/sessions/{id}/turns", post(post_turn))
        .route("/sessions/{id}/collect", post(collect))
        .route("/sessions/{id}/merge", post(merge))
        .route("/sessions/{id}/nodes/{nid}", axum::routing::delete(delete_node))
        .route("/sessions/{id}/nodes/{nid}/activate", post(activate))
        .route("/sessions/{id}/nodes/{nid}/duplicate", post(duplicate))
        .route("/sessions/{id}/nodes/{nid}/modify", post(modify))
        .with_state(state)
}

pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("invalid-body", e.to_string()))
}

fn parse_node(raw: &str) -> ApiResult<NodeId> {
    raw.parse()
        .map_err(|_| ApiError::new(StatusCode::NOT_FOUND, "unknown-node", format!("no node `{raw}`")))
}

fn document(state: &SessionState) -> Value {
    serde_json::from_str(&persist::to_string(state)).expect("session document is JSON")
}

/// Runs `f` on a copy of the session off the async runtime, persists the
/// copy, then publishes it.
async fn mutate<T, F>(app: Arc<AppState>, id: String, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Engine, &mut SessionState) -> ApiResult<T> + Send + 'static,
{
    tokio::task::spawn_blocking(move || {
        let cell = app.store.get(&id)?;
        let mut guard = store::lock(&cell);
        let mut work = guard.clone();
        let out = f(&app.engine, &mut work)?;
        app.store.save(&work)?;
        *guard = work;
        Ok(out)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

async fn read<T, F>(app: Arc<AppState>, id: String, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&SessionState) -> T + Send + 'static,
{
    tokio::task::spawn_blocking(move || {
        let cell = app.store.get(&id)?;
        let guard = store::lock(&cell);
        Ok(f(&guard))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

async fn health() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

async fn sparks(State(app): State<Arc<AppState>>) -> Json<Value> {
    Json(json!(app.engine.sparks.all()))
}

#[derive(Deserialize, Default)]
struct CreateBody {
    #[serde(default)]
    settings: Option<SessionSettings>,
}

async fn create_session(State(app): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<Value>)> {
    let body: CreateBody = if body.iter().all(u8::is_ascii_whitespace) {
        CreateBody::default()
    } else {
        parse_body(&body)?
    };
    let doc = tokio::task::spawn_blocking(move || -> ApiResult<Value> {
        let cell = app.store.create(body.settings.unwrap_or_default())?;
        let guard = store::lock(&cell);
        Ok(document(&guard))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok((StatusCode::CREATED, Json(doc)))
}

async fn get_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    read(app, id, document).await.map(Json)
}

async fn get_graph(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    read(app, id, |s| json!(s.graph.view())).await.map(Json)
}

#[derive(Deserialize)]
struct TurnBody {
    mode: String,
    prompt: String,
}

async fn post_turn(State(app): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let body: TurnBody = parse_body(&body)?;
    let mode: ReflectionMode = body
        .mode
        .parse()
        .map_err(|_| ApiError::bad_request("invalid-mode", format!("unknown mode `{}`", body.mode)))?;
    mutate(app, id, move |engine, s| Ok(json!(engine.turn(s, mode, &body.prompt)?)))
        .await
        .map(Json)
}

#[derive(Deserialize)]
struct CollectBody {
    code: String,
    title: String,
    #[serde(default)]
    preview_asset: Option<String>,
}

async fn collect(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let body: CollectBody = parse_body(&body)?;
    mutate(app, id, move |_, s| {
        let nid = s.collect(body.code, body.title, body.preview_asset);
        Ok(json!({"node": s.graph.node(nid).expect("just collected")}))
    })
    .await
    .map(|v| (StatusCode::CREATED, Json(v)))
}

async fn activate(State(app): State<Arc<AppState>>, Path((id, nid)): Path<(String, String)>) -> ApiResult<Json<Value>> {
    let nid = parse_node(&nid)?;
    mutate(app, id, move |_, s| {
        let ctx = s.graph.activate(nid).map_err(reflexa_core::EngineError::from)?;
        Ok(json!(ctx))
    })
    .await
    .map(Json)
}

async fn duplicate(
    State(app): State<Arc<AppState>>,
    Path((id, nid)): Path<(String, String)>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let nid = parse_node(&nid)?;
    mutate(app, id, move |_, s| {
        let copy = s.duplicate(nid).map_err(reflexa_core::EngineError::from)?;
        Ok(json!({"node": s.graph.node(copy).expect("just duplicated")}))
    })
    .await
    .map(|v| (StatusCode::CREATED, Json(v)))
}

fn recursive_flag(query: Option<String>) -> ApiResult<bool> {
    let mut recursive = false;
    for pair in query.as_deref().unwrap_or("").split('&').filter(|p| !p.is_empty()) {
        let (k, v) = pair.split_once('=').unwrap_or((pair, "true"));
        if k == "recursive" {
            recursive = match v {
                "true" | "1" => true,
                "false" | "0" => false,
                _ => return Err(ApiError::bad_request("invalid-query", format!("recursive={v}"))),
            };
        }
    }
    Ok(recursive)
}

#[derive(Serialize)]
struct DeleteResponse {
    removed: usize,
    active_id: NodeId,
}

async fn delete_node(
    State(app): State<Arc<AppState>>,
    Path((id, nid)): Path<(String, String)>,
    RawQuery(query): RawQuery,
) -> ApiResult<Json<DeleteResponse>> {
    let nid = parse_node(&nid)?;
    let recursive = recursive_flag(query)?;
    mutate(app, id, move |_, s| {
        let removed = s.graph.delete(nid, recursive).map_err(reflexa_core::EngineError::from)?;
        Ok(DeleteResponse {
            removed,
            active_id: s.graph.active_id(),
        })
    })
    .await
    .map(Json)
}

#[derive(Deserialize)]
struct ModifyBody {
    #[serde(default)]
    instruction: Option<String>,
    #[serde(default)]
    spark_id: Option<String>,
}

async fn modify(
    State(app): State<Arc<AppState>>,
    Path((id, nid)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let nid = parse_node(&nid)?;
    let body: ModifyBody = parse_body(&body)?;
    let out = match (body.instruction, body.spark_id) {
        (Some(_), Some(_)) => {
            return Err(ApiError::bad_request(
                "conflicting-fields",
                "give either `instruction` or `spark_id`, not both",
            ))
        }
        (None, None) => {
            return Err(ApiError::bad_request("missing-field", "`instruction` or `spark_id` is required"))
        }
        (Some(instruction), None) => {
            mutate(app, id, move |engine, s| Ok(json!(engine.modify_node(s, nid, &instruction)?))).await?
        }
        (None, Some(spark)) => mutate(app, id, move |engine, s| Ok(json!(engine.apply_spark(s, nid, &spark)?))).await?,
    };
    Ok((StatusCode::CREATED, Json(out)))
}

#[derive(Deserialize)]
struct MergeBody {
    a: String,
    b: String,
    #[serde(default)]
    instruction: String,
}

async fn merge(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let body: MergeBody = parse_body(&body)?;
    let (a, b) = (parse_node(&body.a)?, parse_node(&body.b)?);
    mutate(app, id, move |engine, s| Ok(json!(engine.merge_nodes(s, a, b, &body.instruction)?)))
        .await
        .map(|v| (StatusCode::CREATED, Json(v)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recursive_query_forms() {
        assert!(!recursive_flag(None).unwrap());
        assert!(recursive_flag(Some("recursive=true".into())).unwrap());
        assert!(recursive_flag(Some("x=1&recursive=1".into())).unwrap());
        assert!(recursive_flag(Some("recursive".into())).unwrap());
        assert!(!recursive_flag(Some("recursive=false".into())).unwrap());
        assert!(recursive_flag(Some("recursive=maybe".into())).is_err());
    }
}
