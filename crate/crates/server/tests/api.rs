use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use reflexa_core::gateway::{FailMode, FlakyBackend, MockBackend};
use reflexa_core::{Engine, Gateway};
use reflexa_server::{router, AppState, SessionStore};
use serde_json::{json, Value};
use tower::ServiceExt;

fn app(dir: &Path) -> Router {
    router(AppState::new(Engine::mock(), SessionStore::new(dir, true).unwrap()))
}

fn flaky_app(dir: &Path) -> (Router, Arc<FlakyBackend>) {
    let flaky = Arc::new(FlakyBackend::new(Arc::new(MockBackend)));
    let engine = Engine::mock().with_gateway(Gateway::new(flaky.clone()));
    (router(AppState::new(engine, SessionStore::new(dir, true).unwrap())), flaky)
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn new_session(app: &Router) -> String {
    let (status, doc) = call(app, Method::POST, "/sessions", None).await;
    assert_eq!(status, StatusCode::CREATED);
    doc["session_id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn health_and_sparks() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    assert_eq!(call(&app, Method::GET, "/health", None).await, (StatusCode::OK, json!({"status": "ok"})));
    let (status, sparks) = call(&app, Method::GET, "/sparks", None).await;
    assert_eq!(status, StatusCode::OK);
    let ids: Vec<&str> = sparks.as_array().unwrap().iter().map(|s| s["id"].as_str().unwrap()).collect();
    assert!(ids.contains(&"3d-effect") && ids.contains(&"fractal-animation"));
}

#[tokio::test]
async fn create_and_fetch_session() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (status, doc) = call(&app, Method::POST, "/sessions", Some(json!({"settings": {
        "chat_model": "gpt-4o", "embed_model": "text-embedding-ada-002",
        "context_window_turns": 4, "fewshot_k": 2, "mock": false
    }})))
    .await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(doc["session_id"], "session-0001");
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["settings"]["context_window_turns"], 4);
    assert!(dir.path().join("session-0001.json").exists());

    let (status, fetched) = call(&app, Method::GET, "/sessions/session-0001", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(fetched, doc);

    let (status, err) = call(&app, Method::GET, "/sessions/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["error_code"], "unknown-session");

    let (status, err) = call(&app, Method::POST, "/sessions", Some(json!({"settings": {"fewshot_k": 0}}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["error_code"], "invalid-body");
}

#[tokio::test]
async fn turns_report_template_decisions() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = new_session(&app).await;
    let uri = format!("/sessions/{id}/turns");

    let (status, first) = call(&app, Method::POST, &uri, Some(json!({"mode": "R2", "prompt": "links?"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(first["decision"], "plain");
    assert!(first["template_id"].is_null());
    assert_eq!(first["reply"]["call_kind"], "r2");
    assert!(first["reply"]["fields"]["exploration"].is_string());

    let (_, second) = call(&app, Method::POST, &uri, Some(json!({"mode": "r2", "prompt": "conceptual connections"}))).await;
    assert_eq!(second["decision"], "template_eligible");
    assert_eq!(second["template_id"], "r2-conceptual-connections");
    assert_eq!(second["template_name"], "Conceptual Connections");

    let (status, err) = call(&app, Method::POST, &uri, Some(json!({"mode": "R9", "prompt": "x"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["error_code"], "invalid-mode");
    let (status, err) = call(&app, Method::POST, &uri, Some(json!({"mode": "R1", "prompt": ""}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["error_code"], "empty-prompt");
    let (status, err) = call(&app, Method::POST, &uri, Some(json!({"prompt": "x"}))).await;
    assert_eq!((status, err["error_code"].as_str()), (StatusCode::BAD_REQUEST, Some("invalid-body")));

    let on_disk: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join(format!("{id}.json"))).unwrap()).unwrap();
    assert_eq!(on_disk["nodes"][0]["turns"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn node_operations() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = new_session(&app).await;
    let s = |p: &str| format!("/sessions/{id}{p}");

    let (status, a) = call(&app, Method::POST, &s("/collect"), Some(json!({"code": "circle(1,1,1);", "title": "A"}))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(a["node"]["id"], "1");
    assert_eq!(a["node"]["kind"], "collected");

    let (status, m) = call(&app, Method::POST, &s("/nodes/1/modify"), Some(json!({"instruction": "slower"}))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(m["node"]["kind"], "modified");
    assert_eq!(m["node"]["parent_ids"], json!(["1"]));
    assert!(m["reply"]["fields"]["rationale"].is_string());

    let (status, sp) = call(&app, Method::POST, &s("/nodes/1/modify"), Some(json!({"spark_id": "3d-effect"}))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(sp["node"]["kind"], "spark");
    assert_eq!(sp["node"]["preview_asset"], "spark/3d-effect.png");

    let (status, err) = call(&app, Method::POST, &s("/nodes/1/modify"), Some(json!({"instruction": "x", "spark_id": "3d-effect"}))).await;
    assert_eq!((status, err["error_code"].as_str()), (StatusCode::BAD_REQUEST, Some("conflicting-fields")));
    let (status, err) = call(&app, Method::POST, &s("/nodes/1/modify"), Some(json!({"spark_id": "nope"}))).await;
    assert_eq!((status, err["error_code"].as_str()), (StatusCode::NOT_FOUND, Some("unknown-spark")));
    let (status, err) = call(&app, Method::POST, &s("/nodes/42/modify"), Some(json!({"instruction": "x"}))).await;
    assert_eq!((status, err["error_code"].as_str()), (StatusCode::NOT_FOUND, Some("unknown-node")));

    let (status, mg) = call(&app, Method::POST, &s("/merge"), Some(json!({"a": "2", "b": "3", "instruction": "fuse"}))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(mg["node"]["parent_ids"], json!(["2", "3"]));
    let (status, err) = call(&app, Method::POST, &s("/merge"), Some(json!({"a": "2", "b": "2", "instruction": ""}))).await;
    assert_eq!((status, err["error_code"].as_str()), (StatusCode::BAD_REQUEST, Some("same-node")));

    let (status, ctx) = call(&app, Method::POST, &s("/nodes/1/activate"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ctx["node_id"], "1");
    assert_eq!(ctx["code"], "circle(1,1,1);");

    let (status, dup) = call(&app, Method::POST, &s("/nodes/1/duplicate"), None).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(dup["node"]["code"], "circle(1,1,1);");
    let (status, err) = call(&app, Method::POST, &s("/nodes/0/duplicate"), None).await;
    assert_eq!((status, err["error_code"].as_str()), (StatusCode::BAD_REQUEST, Some("cannot-duplicate-root")));

    let (status, graph) = call(&app, Method::GET, &s("/graph"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(graph["active_id"], "1");
    assert_eq!(graph["nodes"].as_array().unwrap().len(), 6);
    assert!(graph["edges"].as_array().unwrap().contains(&json!(["3", "4"])));

    let (status, err) = call(&app, Method::DELETE, &s("/nodes/1"), None).await;
    assert_eq!((status, err["error_code"].as_str()), (StatusCode::CONFLICT, Some("has-children")));
    let (status, del) = call(&app, Method::DELETE, &s("/nodes/1?recursive=true"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(del, json!({"removed": 5, "active_id": "0"}));
    let (status, err) = call(&app, Method::DELETE, &s("/nodes/0?recursive=true"), None).await;
    assert_eq!((status, err["error_code"].as_str()), (StatusCode::BAD_REQUEST, Some("cannot-delete-root")));
    let (status, _) = call(&app, Method::POST, &s("/nodes/abc/activate"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn upstream_failures_are_502_and_change_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let (app, flaky) = flaky_app(dir.path());
    let id = new_session(&app).await;
    call(&app, Method::POST, &format!("/sessions/{id}/collect"), Some(json!({"code": "x", "title": "x"}))).await;
    let path = dir.path().join(format!("{id}.json"));
    let before = std::fs::read(&path).unwrap();

    for (mode, code) in [
        (FailMode::Provider, "provider-error"),
        (FailMode::Garbage, "malformed-reply"),
        (FailMode::WrongSchema, "missing-keys"),
    ] {
        flaky.set_mode(mode);
        let (status, err) = call(&app, Method::POST, &format!("/sessions/{id}/turns"), Some(json!({"mode": "General", "prompt": "hi"}))).await;
        assert_eq!((status, err["error_code"].as_str()), (StatusCode::BAD_GATEWAY, Some(code)));
        let (status, _) = call(&app, Method::POST, &format!("/sessions/{id}/nodes/1/modify"), Some(json!({"instruction": "x"}))).await;
        assert_eq!(status, StatusCode::BAD_GATEWAY);
    }
    assert_eq!(std::fs::read(&path).unwrap(), before);
    let (_, doc) = call(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(doc, serde_json::from_slice::<Value>(&before).unwrap());
}

#[tokio::test]
async fn concurrent_turns_on_one_session_serialize() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = new_session(&app).await;
    let mut handles = Vec::new();
    for i in 0..8 {
        let app = app.clone();
        let uri = format!("/sessions/{id}/turns");
        handles.push(tokio::spawn(async move {
            call(&app, Method::POST, &uri, Some(json!({"mode": "General", "prompt": format!("q{i}")}))).await
        }));
    }
    for h in handles {
        assert_eq!(h.await.unwrap().0, StatusCode::OK);
    }
    let (_, doc) = call(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    let seqs: Vec<u64> = doc["nodes"][0]["turns"].as_array().unwrap().iter().map(|t| t["seq"].as_u64().unwrap()).collect();
    assert_eq!(seqs, (1..=8).collect::<Vec<_>>());
}

async fn scripted_session(dir: &Path) -> Vec<u8> {
    let app = app(dir);
    let id = new_session(&app).await;
    let s = |p: &str| format!("/sessions/{id}{p}");
    for (mode, prompt) in [("General", "a slow tide"), ("R1", "why tide"), ("R1", "design goal"), ("R3", "reframe")] {
        call(&app, Method::POST, &s("/turns"), Some(json!({"mode": mode, "prompt": prompt}))).await;
    }
    call(&app, Method::POST, &s("/collect"), Some(json!({"code": "circle(9,9,9);", "title": "tide"}))).await;
    call(&app, Method::POST, &s("/nodes/1/modify"), Some(json!({"spark_id": "sine-waves"}))).await;
    call(&app, Method::POST, &s("/nodes/1/modify"), Some(json!({"instruction": "bluer"}))).await;
    call(&app, Method::POST, &s("/merge"), Some(json!({"a": "2", "b": "3", "instruction": "combine"}))).await;
    std::fs::read(dir.join(format!("{id}.json"))).unwrap()
}

#[tokio::test]
async fn mock_sessions_are_byte_identical_across_runs() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let a = scripted_session(d1.path()).await;
    let b = scripted_session(d2.path()).await;
    assert!(a.len() > 1000);
    assert_eq!(a, b);
}

#[tokio::test]
async fn sessions_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let bytes = scripted_session(dir.path()).await;
    let fresh = app(dir.path());
    let (status, doc) = call(&fresh, Method::GET, "/sessions/session-0001", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(doc, serde_json::from_slice::<Value>(&bytes).unwrap());
    assert_eq!(new_session(&fresh).await, "session-0002");
}
