use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use atlas_service::{router, AppState, ServiceConfig, Snapshot};
use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tempfile::TempDir;
use tower::ServiceExt;

const TOKEN: &str = "let-me-in";

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/fixtures/hindko")
}

const FEATURES: &str = r#"{
    "aspiration": {"kind": "binary", "values": {"Hindko": 1}},
    "tone": {"kind": "continuous", "values": {}}
}"#;

/// A writable copy of the fixture, with an overlay file.
fn data_dir() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    for f in ["references.json", "languages.json", "locations.tsv"] {
        fs::copy(fixture_dir().join(f), dir.path().join(f)).unwrap();
    }
    fs::write(dir.path().join("features.json"), FEATURES).unwrap();
    dir
}

fn config(dir: &Path) -> ServiceConfig {
    let mut c = ServiceConfig::new(dir, "127.0.0.1:0".parse().unwrap());
    c.reload_token = Some(TOKEN.into());
    c
}

async fn loaded(dir: &Path) -> (Arc<AppState>, Router) {
    let state = AppState::new(config(dir));
    state.reload().await.unwrap();
    (state.clone(), router(state))
}

async fn get(app: &Router, uri: &str) -> (StatusCode, String) {
    let resp = app
        .clone()
        .oneshot(Request::get(uri).header(header::ACCEPT, "text/html").body(Body::empty()).unwrap())
        .await
        .unwrap();
    let status = resp.status();
    assert_eq!(resp.headers()[header::CONTENT_TYPE], "application/json");
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn post_reload(app: &Router, token: Option<&str>) -> (StatusCode, String) {
    let mut req = Request::post("/api/reload");
    if let Some(t) = token {
        req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
    }
    let resp = app.clone().oneshot(req.body(Body::empty()).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

fn parse(body: &str) -> Value {
    serde_json::from_str(body).unwrap()
}

#[tokio::test]
async fn languages_list() {
    let dir = data_dir();
    let (_, app) = loaded(dir.path()).await;
    let (status, body) = get(&app, "/api/languages").await;
    assert_eq!(status, StatusCode::OK);
    let v = parse(&body);
    let list = v.as_array().unwrap();
    assert_eq!(list.len(), 1);
    assert_eq!(list[0]["id"], "Hindko");
    assert_eq!(list[0]["n_sources"], 1);
    assert_eq!(list[0]["family_path"][0], "Indo-European");
    let centroid = list[0]["centroid"].as_array().unwrap();
    assert!((centroid[0].as_f64().unwrap() - 71.509).abs() < 1e-6);
}

#[tokio::test]
async fn not_loaded_is_unavailable() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::new(config(dir.path())));
    for uri in ["/api/languages", "/api/map/base", "/api/stats/topics", "/api/languages/x/sources"] {
        assert_eq!(get(&app, uri).await.0, StatusCode::SERVICE_UNAVAILABLE, "{uri}");
    }
}

#[tokio::test]
async fn sources_and_unknown_language() {
    let dir = data_dir();
    let (_, app) = loaded(dir.path()).await;
    let (status, body) = get(&app, "/api/languages/Hindko/sources").await;
    assert_eq!(status, StatusCode::OK);
    let v = parse(&body);
    assert_eq!(v.as_array().unwrap().len(), 1);
    assert_eq!(v[0]["locations"], serde_json::json!(["Kohat", "Peshawar"]));
    assert_eq!(v[0]["topics"], serde_json::json!(["overview"]));
    assert_eq!(get(&app, "/api/languages/zz/sources").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn base_and_highlight_maps() {
    let dir = data_dir();
    let (_, app) = loaded(dir.path()).await;
    let (status, body) = get(&app, "/api/map/base").await;
    assert_eq!(status, StatusCode::OK);
    let base = parse(&body);
    let fills: Vec<&Value> = base["features"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|f| f["geometry"]["type"] == "Polygon")
        .map(|f| &f["properties"]["fill"])
        .collect();
    assert_eq!(fills.len(), 2);
    assert!(fills.iter().all(|f| *f == fills[0]));

    let (status, body) = get(&app, "/api/map/highlight/Hindko").await;
    assert_eq!(status, StatusCode::OK);
    let hl = parse(&body);
    let kinds: Vec<&str> = hl["features"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["geometry"]["type"].as_str().unwrap())
        .collect();
    assert_eq!(kinds.iter().filter(|k| **k == "Polygon").count(), 2);
    assert_eq!(kinds.iter().filter(|k| **k == "Point").count(), 2);
    assert_eq!(get(&app, "/api/map/highlight/zz").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn overlay_fills() {
    let dir = data_dir();
    let (_, app) = loaded(dir.path()).await;
    let (status, body) = get(&app, "/api/map/overlay/aspiration").await;
    assert_eq!(status, StatusCode::OK);
    let v = parse(&body);
    assert!(v["features"].as_array().unwrap().iter().all(|f| f["properties"]["fill"] == "#63c2d8"));
    assert_eq!(v["legend"]["color_one"], "#63c2d8");

    let (_, body) = get(&app, "/api/map/overlay/tone").await;
    assert!(parse(&body)["features"].as_array().unwrap().iter().all(|f| f["properties"]["fill"] == "#cccccc"));
    assert_eq!(get(&app, "/api/map/overlay/nope").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn topic_stats() {
    let dir = data_dir();
    let (_, app) = loaded(dir.path()).await;
    let v = parse(&get(&app, "/api/stats/topics").await.1);
    assert_eq!(v["n_sources"], 1);
    assert_eq!(v["n_locations"], 2);
    assert_eq!(v["topic_counts"]["overview"], 1);
}

#[tokio::test]
async fn empty_corpus_serves_empty_payloads() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("references.json"), "[]").unwrap();
    fs::write(dir.path().join("languages.json"), "{}").unwrap();
    let (_, app) = loaded(dir.path()).await;
    assert_eq!(get(&app, "/api/languages").await.1, "[]");
    let stats = parse(&get(&app, "/api/stats/topics").await.1);
    assert_eq!(stats["n_sources"], 0);
    assert_eq!(stats["topic_counts"], serde_json::json!({}));
    let base = parse(&get(&app, "/api/map/base").await.1);
    assert_eq!(base["features"], serde_json::json!([]));
}

#[tokio::test]
async fn reload_requires_the_token() {
    let dir = data_dir();
    let (_, app) = loaded(dir.path()).await;
    assert_eq!(post_reload(&app, None).await.0, StatusCode::UNAUTHORIZED);
    assert_eq!(post_reload(&app, Some("wrong")).await.0, StatusCode::UNAUTHORIZED);

    let mut open = config(dir.path());
    open.reload_token = None;
    let state = AppState::new(open);
    assert_eq!(post_reload(&router(state), Some("")).await.0, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn reload_picks_up_changes() {
    let dir = data_dir();
    let (_, app) = loaded(dir.path()).await;
    let refs = fs::read_to_string(dir.path().join("references.json")).unwrap();
    let mut v = parse(&refs);
    let mut second = v[0].clone();
    second["title"] = "Hindko again".into();
    second["year"] = 1990.into();
    v.as_array_mut().unwrap().push(second);
    fs::write(dir.path().join("references.json"), v.to_string()).unwrap();

    let (status, body) = post_reload(&app, Some(TOKEN)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(parse(&body)["n_sources"], 2);
    assert_eq!(parse(&get(&app, "/api/languages").await.1)[0]["n_sources"], 2);
}

#[tokio::test]
async fn failed_reload_keeps_old_snapshot() {
    let dir = data_dir();
    let (state, app) = loaded(dir.path()).await;
    let before = get(&app, "/api/map/base").await.1;
    fs::write(dir.path().join("languages.json"), "{ not json").unwrap();
    let (status, body) = post_reload(&app, Some(TOKEN)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let report = parse(&body);
    assert!(report["report"][0].as_str().unwrap().starts_with("ERROR ["), "{body}");
    assert_eq!(get(&app, "/api/map/base").await.1, before);
    assert_eq!(state.snapshot().unwrap().corpus().sources().len(), 1);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn readers_never_see_a_partial_reload() {
    let dir = data_dir();
    let (_, app) = loaded(dir.path()).await;
    let before = get(&app, "/api/map/base").await.1;
    fs::write(dir.path().join("references.json"), "[{\"type\": \"article\"").unwrap();

    let readers: Vec<_> = (0..100)
        .map(|_| {
            let app = app.clone();
            tokio::spawn(async move { get(&app, "/api/map/base").await })
        })
        .collect();
    let reload = {
        let app = app.clone();
        tokio::spawn(async move { post_reload(&app, Some(TOKEN)).await })
    };
    for r in readers {
        let (status, body) = r.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        parse(&body);
        assert_eq!(body, before);
    }
    assert_eq!(reload.await.unwrap().0, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn bodies_are_byte_identical_across_loads() {
    let dir = data_dir();
    let (_, a) = loaded(dir.path()).await;
    let (_, b) = loaded(dir.path()).await;
    for uri in [
        "/api/languages",
        "/api/languages/Hindko/sources",
        "/api/map/base",
        "/api/map/highlight/Hindko",
        "/api/map/overlay/aspiration",
        "/api/stats/topics",
    ] {
        assert_eq!(get(&a, uri).await, get(&b, uri).await, "{uri}");
    }
}

#[test]
fn snapshot_builds_synchronously() {
    let dir = data_dir();
    let s = Snapshot::load(dir.path(), &Default::default()).unwrap();
    assert_eq!(s.map().zones.len(), 2);
}
