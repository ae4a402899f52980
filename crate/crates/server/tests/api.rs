use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use base64::Engine;
use latentscout::fsutil::sha256_file;
use latentscout::pipeline::{Overrides, Pipeline, PipelineConfig};
use latentscout::runstore::{layout, RunManifest, RunStore};
use latentscout_server::{bind, router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

fn tiny_config() -> PipelineConfig {
    let text = r#"
        seed = 11
        [dataset.synthetic]
        kind = "color"
        n_samples = 80
        image_size = 16
        n_classes = 2
        p_corr = 0.95
        [train]
        latent_dim = 4
        max_epochs = 2
        batch_size = 16
        encoder_channels = [8, 16]
        decoder_channels = [16, 8]
        [probe]
        max_epochs = 20
        [evidence]
        steps = 4
        extremes = 3
    "#;
    toml::from_str::<PipelineConfig>(text).unwrap().resolve(&Overrides::default())
}

struct Fixture {
    _dir: tempfile::TempDir,
    store: RunStore,
    run: RunManifest,
    app: Router,
}

fn fixture(full: bool) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let store = RunStore::open(dir.path()).unwrap();
    let p = Pipeline::new(store.clone());
    let run = if full { p.run_all(&tiny_config(), |_| {}).unwrap() } else { p.create_run(&tiny_config()).unwrap() };
    let app = router(AppState::new(store.clone()));
    Fixture { _dir: dir, store, run, app }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, String, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map_or(Body::empty(), |b| Body::from(b.to_string()))).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let ctype = resp.headers().get("content-type").map(|v| v.to_str().unwrap().to_string()).unwrap_or_default();
    (status, ctype, to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec())
}

fn json_of(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

#[tokio::test]
async fn empty_root_lists_no_runs() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::new(RunStore::open(dir.path()).unwrap()));
    let (status, _, body) = call(&app, "GET", "/api/runs", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json_of(&body), json!([]));
}

#[tokio::test]
async fn run_detail_has_manifest_and_scoreboard() {
    let f = fixture(true);
    let (status, _, body) = call(&f.app, "GET", &format!("/api/runs/{}", f.run.run_id), None).await;
    assert_eq!(status, StatusCode::OK);
    let v = json_of(&body);
    assert_eq!(v["manifest"]["run_id"], f.run.run_id);
    let board = v["scoreboard"].as_array().unwrap();
    assert_eq!(board.len(), 4);
    let on_disk: Value =
        serde_json::from_str(&std::fs::read_to_string(f.store.path(&f.run.run_id, layout::SCORES)).unwrap()).unwrap();
    assert_eq!(v["scoreboard"], on_disk);

    let (status, _, body) = call(&f.app, "GET", "/api/runs/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(json_of(&body)["error"].as_str().unwrap().contains("nope"));
}

#[tokio::test]
async fn decode_is_deterministic_and_validates_length() {
    let f = fixture(true);
    let uri = format!("/api/runs/{}/decode", f.run.run_id);
    let ckpt = sha256_file(&f.store.path(&f.run.run_id, layout::CHECKPOINT)).unwrap();
    let (s1, ctype, a) = call(&f.app, "POST", &uri, Some(json!({"z": [0.5, -1.0, 0.0, 2.0]}))).await;
    let (_, _, b) = call(&f.app, "POST", &uri, Some(json!({"z": [0.5, -1.0, 0.0, 2.0]}))).await;
    assert_eq!(s1, StatusCode::OK);
    assert_eq!(ctype, "image/png");
    assert_eq!(&a[1..4], b"PNG");
    assert_eq!(a, b);
    assert_eq!(sha256_file(&f.store.path(&f.run.run_id, layout::CHECKPOINT)).unwrap(), ckpt);

    let (status, _, body) = call(&f.app, "POST", &uri, Some(json!({"z": [0.5]}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(json_of(&body)["error"].as_str().unwrap().contains("d = 4"));
    let (status, _, _) = call(&f.app, "POST", &uri, Some(json!({"x": 1}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn traversal_extremes_and_kde() {
    let f = fixture(true);
    let base = format!("/api/runs/{}/dims/2", f.run.run_id);
    let (status, _, body) = call(&f.app, "GET", &format!("{base}/traversal?steps=5&mode=offset"), None).await;
    assert_eq!(status, StatusCode::OK);
    let v = json_of(&body);
    assert_eq!(v["frames"].as_array().unwrap().len(), 5);
    let png = base64::engine::general_purpose::STANDARD.decode(v["frames"][0].as_str().unwrap()).unwrap();
    assert_eq!(&png[1..4], b"PNG");

    let instance = v["instance_id"].as_str().unwrap();
    let (status, _, body) = call(&f.app, "GET", &format!("{base}/traversal?instance={instance}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json_of(&body)["instance_id"], instance);
    let (status, _, _) = call(&f.app, "GET", &format!("{base}/traversal?instance=missing"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _, _) = call(&f.app, "GET", &format!("{base}/traversal?steps=abc"), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _, _) = call(&f.app, "GET", &format!("{base}/traversal?mode=spin"), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let (status, _, body) = call(&f.app, "GET", &format!("{base}/extremes?l=3"), None).await;
    assert_eq!(status, StatusCode::OK);
    let v = json_of(&body);
    let (lo, hi) = (v["min"].as_array().unwrap(), v["max"].as_array().unwrap());
    assert_eq!((lo.len(), hi.len()), (3, 3));
    assert!(lo[2]["value"].as_f64().unwrap() <= hi[2]["value"].as_f64().unwrap());

    let (status, _, body) = call(&f.app, "GET", &format!("{base}/kde"), None).await;
    assert_eq!(status, StatusCode::OK);
    let curves = json_of(&body);
    assert_eq!(curves[0]["dim"], 2);

    let (status, _, _) = call(&f.app, "GET", &format!("/api/runs/{}/dims/9/kde", f.run.run_id), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn verdicts_round_trip_into_the_log_and_report() {
    let f = fixture(true);
    let id = &f.run.run_id;
    let (_, _, before) = call(&f.app, "GET", &format!("/api/runs/{id}/report"), None).await;
    let before = String::from_utf8(before).unwrap();
    let top = f.store.path(id, layout::SCORES);
    let board: Value = serde_json::from_str(&std::fs::read_to_string(top).unwrap()).unwrap();
    let dim = board.as_array().unwrap().iter().find(|r| r["mpwd_rank"] == 1).unwrap()["dim"].as_u64().unwrap();

    let uri = format!("/api/runs/{id}/dims/{dim}/verdict");
    let (status, _, body) = call(&f.app, "POST", &uri, Some(json!({"verdict": "shortcut", "notes": "tint"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json_of(&body)["report_updated"], true);
    let log = std::fs::read_to_string(f.store.path(id, layout::VERDICTS)).unwrap();
    assert!(log.contains("\"shortcut\"") && log.contains("tint"));

    let (status, ctype, after) = call(&f.app, "GET", &format!("/api/runs/{id}/report"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(ctype.starts_with("text/html"));
    let after = String::from_utf8(after).unwrap();
    assert_ne!(before, after);
    assert!(after.contains("tint"));

    let (status, _, _) = call(&f.app, "POST", &uri, Some(json!({"verdict": "maybe"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn unanalyzed_runs_answer_conflict() {
    let f = fixture(false);
    let id = &f.run.run_id;
    for (method, uri, body) in [
        ("GET", format!("/api/runs/{id}/dims/1/kde"), None),
        ("GET", format!("/api/runs/{id}/report"), None),
        ("POST", format!("/api/runs/{id}/decode"), Some(json!({"z": [0, 0, 0, 0]}))),
        ("POST", format!("/api/runs/{id}/dims/1/verdict"), Some(json!({"verdict": "valid"}))),
    ] {
        let (status, _, body) = call(&f.app, method, &uri, body).await;
        assert_eq!(status, StatusCode::CONFLICT, "{uri}");
        assert!(json_of(&body)["error"].is_string());
    }
}

#[tokio::test]
async fn busy_port_is_a_startup_error() {
    let first = bind("127.0.0.1:0".parse().unwrap()).await.unwrap();
    let addr = first.local_addr().unwrap();
    let err = bind(addr).await.unwrap_err();
    assert!(err.to_string().contains(&addr.to_string()));
}
