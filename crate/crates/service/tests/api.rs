use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use canopy_agent::Agent;
use canopy_core::synthetic::{forest_pair, Rect, SceneSpec};
use canopy_service::{router, AppState, ServiceConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn app_with(config: ServiceConfig) -> Router {
    router(AppState::new(config, Agent::default()))
}

fn app() -> Router {
    app_with(ServiceConfig::new(fixtures()))
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>, Option<String>) {
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
    let ct = resp
        .headers()
        .get("content-type")
        .map(|v| v.to_str().unwrap().to_string());
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes, ct)
}

async fn call_json(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, bytes, _) = call(app, method, uri, body).await;
    let v = serde_json::from_slice(&bytes)
        .unwrap_or_else(|_| panic!("non-JSON body for {uri}: {:?}", String::from_utf8_lossy(&bytes)));
    (s, v)
}

fn assert_error_shape(v: &Value, status: StatusCode) {
    let e = v;
    assert!(e["code"].is_string(), "no code in {v}");
    assert!(e["message"].is_string(), "no message in {v}");
    assert_eq!(e["status"].as_u64(), Some(u64::from(status.as_u16())), "{v}");
}

async fn new_session(app: &Router) -> String {
    let (s, v) = call_json(app, Method::POST, "/v1/sessions", None).await;
    assert_eq!(s, StatusCode::CREATED);
    v["session_id"].as_str().unwrap().to_string()
}

fn upload_body(seed: u64, with_mask: bool) -> (Value, f64) {
    let spec = SceneSpec::new(64, 64, vec![Rect::square(8, 8, 20)]).with_seed(seed);
    let s = forest_pair(&spec, "up");
    let enc = |b: Vec<u8>| STANDARD.encode(b);
    let mut v = json!({
        "a": enc(s.pair.epoch_a().encode_png().unwrap()),
        "b": enc(s.pair.epoch_b().encode_png().unwrap()),
        "pair_id": format!("scene_{seed}"),
    });
    if with_mask {
        v["mask"] = json!(enc(s.truth.encode_png().unwrap()));
    }
    (v, s.change_percent())
}

#[tokio::test]
async fn health_lists_tools() {
    let (s, v) = call_json(&app(), Method::GET, "/v1/health", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "ok");
    assert!(v["tools"].as_array().unwrap().iter().any(|t| t == "detect_changes"));
}

#[tokio::test]
async fn every_error_uses_the_same_shape() {
    let app = app();
    let sid = new_session(&app).await;
    let cases: Vec<(Method, String, Option<Value>, StatusCode)> = vec![
        (Method::GET, "/v1/nowhere".into(), None, StatusCode::NOT_FOUND),
        (
            Method::DELETE,
            "/v1/sessions".into(),
            None,
            StatusCode::METHOD_NOT_ALLOWED,
        ),
        (Method::GET, "/v1/sessions/missing".into(), None, StatusCode::NOT_FOUND),
        (
            Method::GET,
            format!("/v1/sessions/{sid}/artifacts/a99"),
            None,
            StatusCode::NOT_FOUND,
        ),
        (
            Method::POST,
            format!("/v1/sessions/{sid}/messages"),
            Some(json!({"text": "  "})),
            StatusCode::UNPROCESSABLE_ENTITY,
        ),
        (
            Method::POST,
            format!("/v1/sessions/{sid}/messages"),
            Some(json!({"txt": "hi"})),
            StatusCode::UNPROCESSABLE_ENTITY,
        ),
        (
            Method::POST,
            format!("/v1/sessions/{sid}/pair"),
            Some(json!({"a": "!!", "b": "AA=="})),
            StatusCode::BAD_REQUEST,
        ),
        (
            Method::POST,
            format!("/v1/sessions/{sid}/pair"),
            Some(json!({"a": "AAAA", "b": "AAAA"})),
            StatusCode::BAD_REQUEST,
        ),
        (Method::GET, "/v1/eval/nojob".into(), None, StatusCode::NOT_FOUND),
        (
            Method::POST,
            "/v1/eval".into(),
            Some(json!({"manifest": "../../etc/passwd", "pred_dir": "x"})),
            StatusCode::BAD_REQUEST,
        ),
        (
            Method::POST,
            "/v1/eval".into(),
            Some(json!({"manifest": "golden/manifest.json"})),
            StatusCode::BAD_REQUEST,
        ),
        (
            Method::POST,
            "/v1/eval".into(),
            Some(json!({"manifest": "golden/none.json", "pred_dir": "golden/pred"})),
            StatusCode::NOT_FOUND,
        ),
    ];
    for (method, uri, body, want) in cases {
        let (s, v) = call_json(&app, method.clone(), &uri, body).await;
        assert_eq!(s, want, "{method} {uri}: {v}");
        assert_error_shape(&v, want);
    }

    // malformed JSON bodies
    let req = Request::builder()
        .method(Method::POST)
        .uri(format!("/v1/sessions/{sid}/messages"))
        .header("content-type", "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let v: Value = serde_json::from_slice(&resp.into_body().collect().await.unwrap().to_bytes()).unwrap();
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error_shape(&v, status);
}

#[tokio::test]
async fn empty_message_names_the_field() {
    let app = app();
    let sid = new_session(&app).await;
    let (_, v) = call_json(
        &app,
        Method::POST,
        &format!("/v1/sessions/{sid}/messages"),
        Some(json!({"text": ""})),
    )
    .await;
    assert_eq!(v["code"], "empty_message");
    assert_eq!(v["field"], "text");
}

#[tokio::test]
async fn oversized_bodies_are_rejected() {
    let mut config = ServiceConfig::new(fixtures());
    config.max_body_bytes = 1024;
    let app = app_with(config);
    let sid = new_session(&app).await;
    let (s, v) = call_json(
        &app,
        Method::POST,
        &format!("/v1/sessions/{sid}/pair"),
        Some(json!({"a": "A".repeat(4096), "b": "A"})),
    )
    .await;
    assert_eq!(s, StatusCode::PAYLOAD_TOO_LARGE);
    assert_error_shape(&v, s);
}

#[tokio::test]
async fn mismatched_upload_dimensions_are_reported() {
    let app = app();
    let sid = new_session(&app).await;
    let (mut body, _) = upload_body(1, false);
    let small = forest_pair(&SceneSpec::new(32, 32, vec![]), "s");
    body["b"] = json!(STANDARD.encode(small.pair.epoch_b().encode_png().unwrap()));
    let (s, v) = call_json(&app, Method::POST, &format!("/v1/sessions/{sid}/pair"), Some(body)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["code"], "dimension_mismatch");
}

#[tokio::test]
async fn conversation_produces_artifacts() {
    let app = app();
    let sid = new_session(&app).await;
    let (body, truth) = upload_body(5, true);
    let (s, pair) = call_json(&app, Method::POST, &format!("/v1/sessions/{sid}/pair"), Some(body)).await;
    assert_eq!(s, StatusCode::OK, "{pair}");
    assert_eq!(pair["artifact_id"], "a1");

    let (s, turn) = call_json(
        &app,
        Method::POST,
        &format!("/v1/sessions/{sid}/messages"),
        Some(json!({"text": "how much forest was lost?"})),
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{turn}");
    let answer = turn["answer"].as_str().unwrap();
    assert!(answer.contains("percent"), "{answer}");
    assert!(!turn["artifacts"].as_array().unwrap().is_empty());
    let _ = truth;

    let (_, turn) = call_json(
        &app,
        Method::POST,
        &format!("/v1/sessions/{sid}/messages"),
        Some(json!({"text": "show the overlay"})),
    )
    .await;
    let overlay = turn["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .find(|a| a["kind"] == "overlay")
        .unwrap_or_else(|| panic!("no overlay in {turn}"))
        .clone();
    let (s, bytes, ct) = call(
        &app,
        Method::GET,
        &format!("/v1/sessions/{sid}/artifacts/{}", overlay["id"].as_str().unwrap()),
        None,
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(ct.as_deref(), Some("image/png"));
    assert_eq!(&bytes[1..4], b"PNG");

    let (_, stats) = call_json(&app, Method::GET, &format!("/v1/sessions/{sid}/artifacts/a3"), None).await;
    assert!(stats["data"].is_object(), "{stats}");

    let (s, desc) = call_json(&app, Method::GET, &format!("/v1/sessions/{sid}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(desc["turns"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn sessions_are_isolated() {
    let app = app();
    let first = new_session(&app).await;
    let second = new_session(&app).await;
    assert_ne!(first, second);
    let (body, _) = upload_body(2, false);
    call_json(&app, Method::POST, &format!("/v1/sessions/{first}/pair"), Some(body)).await;

    let (_, a) = call_json(&app, Method::GET, &format!("/v1/sessions/{first}"), None).await;
    let (_, b) = call_json(&app, Method::GET, &format!("/v1/sessions/{second}"), None).await;
    assert_eq!(a["artifacts"].as_array().unwrap().len(), 1);
    assert!(b["artifacts"].as_array().unwrap().is_empty());
    assert!(b["pair"].is_null());
    let (s, _) = call_json(&app, Method::GET, &format!("/v1/sessions/{second}/artifacts/a1"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn turns_on_one_session_serialize() {
    let app = app();
    let sid = new_session(&app).await;
    let (body, _) = upload_body(9, true);
    call_json(&app, Method::POST, &format!("/v1/sessions/{sid}/pair"), Some(body)).await;
    let mut handles = Vec::new();
    for _ in 0..4 {
        let app = app.clone();
        let uri = format!("/v1/sessions/{sid}/messages");
        handles.push(tokio::spawn(async move {
            call_json(&app, Method::POST, &uri, Some(json!({"text": "how much was lost"}))).await
        }));
    }
    let mut indices = Vec::new();
    for h in handles {
        let (s, v) = h.await.unwrap();
        assert_eq!(s, StatusCode::OK);
        indices.push(v["index"].as_u64().unwrap());
    }
    indices.sort_unstable();
    assert_eq!(indices, vec![1, 2, 3, 4]);
}

async fn wait_for(app: &Router, job: &str) -> Value {
    for _ in 0..200 {
        let (s, v) = call_json(app, Method::GET, &format!("/v1/eval/{job}"), None).await;
        assert_eq!(s, StatusCode::OK);
        if v["status"] != "running" {
            return v;
        }
        tokio::time::sleep(Duration::from_millis(25)).await;
    }
    panic!("job {job} did not finish");
}

#[tokio::test]
async fn eval_job_matches_golden_scores() {
    let app = app();
    let (s, v) = call_json(
        &app,
        Method::POST,
        "/v1/eval",
        Some(json!({
            "manifest": "golden/manifest.json",
            "pred_dir": "golden/pred",
            "captions": "golden/candidates.json",
            "split": "test",
        })),
    )
    .await;
    assert_eq!(s, StatusCode::ACCEPTED, "{v}");
    let done = wait_for(&app, v["job_id"].as_str().unwrap()).await;
    assert_eq!(done["status"], "done", "{done}");
    let expected: Value =
        serde_json::from_str(&std::fs::read_to_string(fixtures().join("golden/expected.json")).unwrap()).unwrap();
    let report = &done["report"];
    let got = report["seg"]["miou"].as_f64().unwrap();
    assert!((got - expected["seg"]["miou"].as_f64().unwrap()).abs() < 1e-9);
    let b4 = report["cap"]["b4"].as_f64().unwrap();
    assert!((b4 - expected["bleu"][3].as_f64().unwrap()).abs() < 1e-9);
    assert!(done["table"].as_str().unwrap().contains("mIoU"));
}

#[tokio::test]
async fn eval_rejects_escaping_paths() {
    let (s, v) = call_json(
        &app(),
        Method::POST,
        "/v1/eval",
        Some(json!({"manifest": "golden/manifest.json", "pred_dir": "../../etc"})),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["code"], "path_escape");
    assert_eq!(v["field"], "pred_dir");
}

#[tokio::test]
async fn eval_names_the_missing_prediction() {
    let root = tempfile::tempdir().unwrap();
    let golden = fixtures().join("golden");
    let dst = root.path().join("golden");
    std::fs::create_dir_all(dst.join("pred")).unwrap();
    for sub in ["A", "B", "label"] {
        std::fs::create_dir_all(dst.join(sub)).unwrap();
        for e in std::fs::read_dir(golden.join(sub)).unwrap() {
            let e = e.unwrap();
            std::fs::copy(e.path(), dst.join(sub).join(e.file_name())).unwrap();
        }
    }
    std::fs::copy(golden.join("manifest.json"), dst.join("manifest.json")).unwrap();
    for e in std::fs::read_dir(golden.join("pred")).unwrap() {
        let e = e.unwrap();
        if e.file_name() != "g03.png" {
            std::fs::copy(e.path(), dst.join("pred").join(e.file_name())).unwrap();
        }
    }
    let app = app_with(ServiceConfig::new(root.path()));
    let (s, v) = call_json(
        &app,
        Method::POST,
        "/v1/eval",
        Some(json!({"manifest": "golden/manifest.json", "pred_dir": "golden/pred"})),
    )
    .await;
    assert_eq!(s, StatusCode::NOT_FOUND, "{v}");
    assert_eq!(v["code"], "missing_prediction");
    assert!(v["message"].as_str().unwrap().contains("g03"));
}

#[test]
fn state_is_shareable() {
    fn check<T: Send + Sync>() {}
    check::<Arc<AppState>>();
}

#[tokio::test]
async fn message_before_upload_reports_failed_step() {
    let app = app();
    let sid = new_session(&app).await;
    let (s, turn) = call_json(
        &app,
        Method::POST,
        &format!("/v1/sessions/{sid}/messages"),
        Some(json!({"text": "how much forest was lost?"})),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    let failed: Vec<&Value> = turn["calls"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["status"] == "failed")
        .collect();
    assert!(!failed.is_empty(), "{turn}");
    assert!(
        failed[0]["error"].as_str().unwrap().contains("no pair loaded"),
        "{turn}"
    );
}

#[tokio::test]
async fn identical_sequences_give_identical_turns() {
    let mut bodies = Vec::new();
    for _ in 0..2 {
        let app = app();
        let sid = new_session(&app).await;
        let (body, _) = upload_body(4, true);
        call_json(&app, Method::POST, &format!("/v1/sessions/{sid}/pair"), Some(body)).await;
        let mut turns = Vec::new();
        for text in ["how much was lost", "where", "describe it", "show overlay"] {
            let (_, v) = call_json(
                &app,
                Method::POST,
                &format!("/v1/sessions/{sid}/messages"),
                Some(json!({"text": text})),
            )
            .await;
            turns.push(v);
        }
        bodies.push(serde_json::to_string(&turns).unwrap());
    }
    assert_eq!(bodies[0], bodies[1]);
}
