//! Router-level tests without a socket.

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use waymark_core::buffer::BufferGraph;

async fn send(method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = waymark_server::router().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

#[tokio::test]
async fn health_reports_ok() {
    let (status, body) = send("GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    assert_eq!(body["sessions"], 0);
}

#[tokio::test]
async fn inspect_empty_buffer() {
    let snap = BufferGraph::new(10).to_snapshot();
    let (status, body) = send("POST", "/v1/inspect", Some(json!({"kind": "buffer", "content": snap}))).await;
    assert_eq!(status, StatusCode::OK);
    assert!(body["text"].as_str().unwrap().contains("0 nodes, 0 edges"));
}

#[tokio::test]
async fn unknown_session_is_not_found() {
    let (status, body) = send("POST", "/v1/sessions/s99/explore", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["kind"], "not_found");
}

#[tokio::test]
async fn bad_results_are_a_config_error() {
    let (status, body) = send("POST", "/v1/eval", Some(json!({"results": "{not json"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["kind"], "config");
}

#[tokio::test]
async fn out_of_range_config_is_rejected() {
    let (status, body) = send("POST", "/v1/bench", Some(json!({"config": {"rounds": 0}}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
    assert_eq!(body["kind"], "config");
}
