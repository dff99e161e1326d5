use std::path::Path;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use medkg::pipeline::{Pipeline, PipelineConfig, Workspace};
use medkg_server::{router, AppState};
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

const TOKEN: &str = "s3cret";

fn built_app() -> (TempDir, Router) {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/table1/pipeline.json");
    let work = tempfile::tempdir().unwrap();
    let mut config = PipelineConfig::load(&fixture).unwrap();
    config.work_dir = work.path().to_path_buf();
    let mut p = Pipeline::new(config.clone()).unwrap();
    p.build().unwrap();
    let ws = Workspace::open(config).unwrap();
    let state = AppState::from_workspace(&ws, Some(TOKEN.into())).unwrap();
    (work, router(state))
}

fn enc(s: &str) -> String {
    s.bytes()
        .map(|b| if b.is_ascii_alphanumeric() || b"-_.~".contains(&b) { (b as char).to_string() } else { format!("%{b:02X}") })
        .collect()
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri).header(header::AUTHORIZATION, format!("Bearer {TOKEN}"));
    let body = match body {
        Some(v) => {
            req = req.header(header::CONTENT_TYPE, "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
    (status, value)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, Method::GET, uri, None).await
}

async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    call(app, Method::POST, uri, Some(body)).await
}

fn decision(action: &str, version: u64) -> Value {
    json!({ "action": action, "reviewer_id": "rev-1", "expected_version": version })
}

#[tokio::test]
async fn token_is_required_except_for_health() {
    let (_w, app) = built_app();
    let plain = |uri: &str, auth: Option<&str>| {
        let mut b = Request::builder().uri(uri);
        if let Some(a) = auth {
            b = b.header(header::AUTHORIZATION, a);
        }
        b.body(Body::empty()).unwrap()
    };
    let status = |req: Request<Body>| {
        let app = app.clone();
        async move { app.oneshot(req).await.unwrap().status() }
    };
    assert_eq!(status(plain("/health", None)).await, StatusCode::OK);
    assert_eq!(status(plain("/review/stats", None)).await, StatusCode::UNAUTHORIZED);
    assert_eq!(status(plain("/review/stats", Some("Bearer nope"))).await, StatusCode::UNAUTHORIZED);
    assert_eq!(status(plain("/review/stats", Some(TOKEN))).await, StatusCode::UNAUTHORIZED);
    assert_eq!(status(plain("/review/stats", Some(&format!("Bearer {TOKEN}")))).await, StatusCode::OK);
}

#[tokio::test]
async fn decisions_update_queue_precision_and_graph() {
    let (_w, app) = built_app();
    let (s, stats) = get(&app, "/review/stats").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(stats["pending_edges"], 47);
    assert_eq!(stats["reviewed"], 0);
    assert!(stats["precision"].is_null());

    let (_, pending) = get(&app, "/review/items?status=pending").await;
    let pending = pending.as_array().unwrap().clone();
    assert_eq!(pending.len(), 47);

    let mut expected_accepted = 0;
    for (i, item) in pending.iter().take(5).enumerate() {
        let id = item["item_id"].as_str().unwrap();
        let version = item["version"].as_u64().unwrap();
        let action = if i == 3 { "reject" } else { "accept" };
        let (s, after) = post(&app, &format!("/review/items/{}/decision", enc(id)), decision(action, version)).await;
        assert_eq!(s, StatusCode::OK, "{after}");
        assert_eq!(after["version"].as_u64().unwrap(), version + 1);
        if action == "accept" {
            expected_accepted += 1;
        }
        let (_, stats) = get(&app, "/review/stats").await;
        assert_eq!(stats["pending_edges"], 47 - (i + 1));
        assert_eq!(stats["reviewed"], i + 1);
        assert_eq!(stats["accepted"], expected_accepted);

        let edge_id = item["target"]["edge_id"].as_str().unwrap();
        let (_, edge) = get(&app, &format!("/graph/edges/{}", enc(edge_id))).await;
        assert_eq!(edge["status"], if action == "accept" { "asserted" } else { "retracted" });
    }
    let (_, stats) = get(&app, "/review/stats").await;
    assert_eq!(stats["precision"], "4/5");
    assert_eq!(stats["precision_display"], "80%");

    // The first item moved on to version 2; a client still holding version 1 loses.
    let first = pending[0]["item_id"].as_str().unwrap();
    let (s, err) = post(&app, &format!("/review/items/{}/decision", enc(first)), decision("reject", 1)).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(err["error"], "version_conflict");
    assert_eq!(err["current_version"], 2);

    let (_, accepted) = get(&app, "/review/items?status=accepted").await;
    assert_eq!(accepted.as_array().unwrap().len(), 4);
}

#[tokio::test]
async fn next_item_drains_to_no_content() {
    let (_w, app) = built_app();
    let (s, first) = get(&app, "/review/next?reviewer=rev-1").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(first["status"], "pending");
    assert!(first["context"].is_object());

    loop {
        let (s, item) = get(&app, "/review/next").await;
        if s == StatusCode::NO_CONTENT {
            break;
        }
        let id = item["item_id"].as_str().unwrap();
        let (s, _) = post(&app, &format!("/review/items/{}/decision", enc(id)), decision("accept", item["version"].as_u64().unwrap())).await;
        assert_eq!(s, StatusCode::OK);
    }
    let (_, stats) = get(&app, "/review/stats").await;
    assert_eq!(stats["pending_edges"], 0);
    assert_eq!(stats["precision_display"], "100%");
}

#[tokio::test]
async fn bad_requests_map_to_client_errors() {
    let (_w, app) = built_app();
    assert_eq!(get(&app, "/review/items?status=bogus").await.0, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, err) = get(&app, "/review/items/no-such-item").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(err["error"], "not_found");
    assert_eq!(post(&app, "/review/items/no-such-item/decision", decision("accept", 1)).await.0, StatusCode::NOT_FOUND);

    let (_, item) = get(&app, "/review/next").await;
    let uri = format!("/review/items/{}/decision", enc(item["item_id"].as_str().unwrap()));
    // An edit needs the edited triple.
    assert_eq!(post(&app, &uri, decision("edit", 1)).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(post(&app, &uri, json!({ "action": "accept" })).await.0, StatusCode::UNPROCESSABLE_ENTITY);

    assert_eq!(get(&app, "/graph/nodes/nothing").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, "/graph/edges/nothing").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, "/graph/edges?status=maybe").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get(&app, "/templates/missing/versions").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn feedback_creates_a_template_version() {
    let (_w, app) = built_app();
    let (s, versions) = get(&app, "/templates/extract/versions").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(versions.as_array().unwrap().len(), 1);

    let body = json!({ "kind": "rule_adjustment", "rule_patch": "Keep units exactly as written.", "justification": "units were normalized" });
    let (s, created) = post(&app, "/templates/extract/feedback", body).await;
    assert_eq!(s, StatusCode::CREATED, "{created}");
    assert_eq!(created["template"]["version"], 2);
    assert_eq!(created["action"]["resulting_version"], 2);
    assert!(created["template"]["body"].as_str().unwrap().trim_end().ends_with("Keep units exactly as written."));

    let (_, versions) = get(&app, "/templates/extract/versions").await;
    assert_eq!(versions.as_array().unwrap().len(), 2);

    let both = json!({ "kind": "rule_adjustment", "rule_patch": "x", "new_body": "y" });
    assert_eq!(post(&app, "/templates/extract/feedback", both).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    let missing = json!({ "kind": "rule_adjustment", "rule_patch": "x" });
    assert_eq!(post(&app, "/templates/nope/feedback", missing).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn qa_answers_from_reviewed_edges() {
    let (_w, app) = built_app();
    let (s, r) = post(&app, "/qa", json!({ "text": "What is the reference range for Lipase?" })).await;
    assert_eq!(s, StatusCode::OK);
    assert!(r["text"].as_str().unwrap().contains("13–60 U/L"), "{r}");
    assert_eq!(post(&app, "/qa", json!({ "text": "   " })).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(post(&app, "/qa", json!({ "text": "Lipase?", "hop_limit": 9 })).await.0, StatusCode::UNPROCESSABLE_ENTITY);

    let lipase = "Which diseases are associated with Lipase?";
    let (_, before) = post(&app, "/qa", json!({ "text": lipase })).await;
    assert!(before["answer_entities"].as_array().unwrap().is_empty());

    let (_, nodes) = get(&app, "/graph/nodes?type=ClinicalIndicator&label=Lipase").await;
    let id = nodes[0]["entity_id"].as_str().unwrap().to_string();
    let (_, items) = get(&app, "/review/items?status=pending").await;
    for item in items.as_array().unwrap() {
        let (_, edge) = get(&app, &format!("/graph/edges/{}", enc(item["target"]["edge_id"].as_str().unwrap()))).await;
        if edge["subject"] == id.as_str() {
            let uri = format!("/review/items/{}/decision", enc(item["item_id"].as_str().unwrap()));
            assert_eq!(post(&app, &uri, decision("accept", 1)).await.0, StatusCode::OK);
        }
    }
    let (_, after) = post(&app, "/qa", json!({ "text": lipase })).await;
    assert!(!after["answer_entities"].as_array().unwrap().is_empty(), "{after}");
    assert!(!after["cited_edge_ids"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn graph_endpoints() {
    let (_w, app) = built_app();
    let (s, stats) = get(&app, "/graph/stats").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(stats["guidelines_covered"], 15);

    let (_, indicators) = get(&app, "/graph/nodes?type=ClinicalIndicator").await;
    let indicators = indicators.as_array().unwrap();
    assert_eq!(indicators.len(), 20);
    let id = indicators[0]["entity_id"].as_str().unwrap();
    let (s, node) = get(&app, &format!("/graph/nodes/{}", enc(id))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(node["entity_id"], id);

    let (_, edges) = get(&app, &format!("/graph/edges?subject={}&status=candidate", enc(id))).await;
    let edges = edges.as_array().unwrap();
    assert!(!edges.is_empty());
    assert!(edges.iter().all(|e| e["subject"] == id && e["status"] == "candidate"));

    let (s, hood) = get(&app, &format!("/graph/neighborhood?seed={}&hops=1", enc(id))).await;
    assert_eq!(s, StatusCode::OK);
    assert!(hood["nodes"].get(id).is_some());
    assert_eq!(get(&app, &format!("/graph/neighborhood?seed={}&hops=9", enc(id))).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(get(&app, "/graph/neighborhood?seed=nothing").await.0, StatusCode::NOT_FOUND);

    let other = indicators[1]["entity_id"].as_str().unwrap();
    let (s, paths) = get(&app, &format!("/graph/paths?src={}&dst={}&max_hops=2", enc(id), enc(other))).await;
    assert_eq!(s, StatusCode::OK);
    assert!(paths.as_array().unwrap().is_empty(), "no asserted edges yet");
    assert_eq!(get(&app, &format!("/graph/paths?src={}&dst=nothing", enc(id))).await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, &format!("/graph/paths?src={}&dst={}&max_hops=7", enc(id), enc(other))).await.0, StatusCode::UNPROCESSABLE_ENTITY);

    let (s, conflicts) = get(&app, "/graph/conflicts?escalated=true").await;
    assert_eq!(s, StatusCode::OK);
    assert!(conflicts.is_array());
}
