//! HTTP API over a run root: run listing, live traversals and decodes,
//! extremes, KDE data, verdict submission and the assembled report.
//!
//! Dimensions in paths (`/dims/{j}`) are 1-based. Every error response has a
//! `{"error": "..."}` body: 404 for unknown runs or instances, 409 when the
//! run has not reached the needed stage, 422 for invalid input.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use latentscout::data::LabeledImageSet;
use latentscout::imageops::encode_png;
use latentscout::pipeline::Pipeline;
use latentscout::runstore::{layout, RunManifest, RunStore, Verdict};
use latentscout::visual::{extremes, to_f32, traverse, TraversalMode, TraversalSpec, DEFAULT_EXTREMES, DEFAULT_STEPS};
use latentscout::{Error, Latents, Vae};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::net::TcpListener;

/// Upper bound on traversal frames per request.
pub const MAX_STEPS: usize = 64;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn unprocessable(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::UNPROCESSABLE_ENTITY, message: message.into() }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::State(_) => StatusCode::CONFLICT,
            Error::Config(_) | Error::Contract(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError { status, message: e.to_string() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Decoded model plus the training latents and images, loaded on first use.
struct RunAssets {
    model: Arc<Vae>,
    evidence: Option<Arc<(Latents, LabeledImageSet)>>,
}

/// Shared service state. Loaded models are keyed by run id and checkpoint
/// hash, so a retrained run is reloaded while unchanged runs stay cached.
#[derive(Clone)]
pub struct AppState {
    pipeline: Pipeline,
    cache: Arc<Mutex<HashMap<(String, String), RunAssets>>>,
}

impl AppState {
    pub fn new(store: RunStore) -> Self {
        AppState { pipeline: Pipeline::new(store), cache: Arc::default() }
    }

    fn store(&self) -> &RunStore {
        self.pipeline.store()
    }

    fn key(m: &RunManifest) -> (String, String) {
        (m.run_id.clone(), m.artifacts.get(layout::CHECKPOINT).cloned().unwrap_or_default())
    }

    fn model(&self, m: &RunManifest) -> ApiResult<Arc<Vae>> {
        let key = Self::key(m);
        if let Some(a) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(a.model.clone());
        }
        let model = Arc::new(self.pipeline.load_model(&m.run_id)?);
        let mut cache = self.cache.lock().expect("cache lock");
        let entry = cache.entry(key).or_insert(RunAssets { model, evidence: None });
        Ok(entry.model.clone())
    }

    fn evidence_data(&self, m: &RunManifest) -> ApiResult<Arc<(Latents, LabeledImageSet)>> {
        let model = self.model(m)?;
        let key = Self::key(m);
        if let Some(e) = self.cache.lock().expect("cache lock").get(&key).and_then(|a| a.evidence.clone()) {
            return Ok(e);
        }
        let latents = self.pipeline.load_latents(m)?;
        let (set, splits) = self.pipeline.load_data(&m.run_id)?;
        let data = Arc::new((latents, set.subset(&splits.train)));
        let mut cache = self.cache.lock().expect("cache lock");
        let entry = cache.entry(key).or_insert(RunAssets { model, evidence: None });
        Ok(entry.evidence.get_or_insert(data).clone())
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/runs", get(list_runs))
        .route("/api/runs/{id}", get(get_run))
        .route("/api/runs/{id}/dims/{j}/traversal", get(traversal))
        .route("/api/runs/{id}/dims/{j}/extremes", get(extremes_handler))
        .route("/api/runs/{id}/dims/{j}/kde", get(kde))
        .route("/api/runs/{id}/dims/{j}/verdict", post(verdict))
        .route("/api/runs/{id}/decode", post(decode))
        .route("/api/runs/{id}/report", get(report))
        .with_state(state)
}

/// Bind the listening socket; a busy port is reported here, before serving.
pub async fn bind(addr: SocketAddr) -> latentscout::Result<TcpListener> {
    TcpListener::bind(addr)
        .await
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("cannot listen on {addr}: {e}"))))
}

/// Serve the API for an existing run root until the process is stopped.
pub async fn serve(run_root: &Path, addr: SocketAddr) -> latentscout::Result<()> {
    let store = RunStore::open_existing(run_root)?;
    let listener = bind(addr).await?;
    log::info!("serving {} on http://{}", run_root.display(), listener.local_addr()?);
    axum::serve(listener, router(AppState::new(store))).await?;
    Ok(())
}

fn png_base64(img: &[f32], set: (usize, usize, usize)) -> ApiResult<String> {
    Ok(STANDARD.encode(encode_png(img, set.0, set.1, set.2)?))
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::unprocessable(format!("invalid request body: {e}")))
}

fn query_usize(q: &HashMap<String, String>, name: &str) -> ApiResult<Option<usize>> {
    q.get(name)
        .map(|v| {
            v.parse::<usize>()
                .map_err(|_| ApiError::unprocessable(format!("{name} must be a non-negative integer, got `{v}`")))
        })
        .transpose()
}

/// Resolve a 1-based path dimension to a 0-based index.
fn dim_index(m: &RunManifest, j: usize) -> ApiResult<usize> {
    let d = m.latent_dim();
    if j == 0 || j > d {
        return Err(ApiError::unprocessable(format!("dimension {j} out of range 1..={d}")));
    }
    Ok(j - 1)
}

fn require_analyzed(m: &RunManifest) -> ApiResult<()> {
    if !m.stage_done("analyze") {
        return Err(Error::State(format!("run {} has not been analyzed", m.run_id)).into());
    }
    Ok(())
}

fn geometry(m: &RunManifest) -> (usize, usize, usize) {
    (m.dataset.height, m.dataset.width, m.dataset.channels)
}

async fn list_runs(State(s): State<AppState>) -> ApiResult<Json<Vec<RunManifest>>> {
    Ok(Json(s.store().list_runs()?))
}

async fn get_run(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let m = s.store().get_run(&id)?;
    let scoreboard = match s.pipeline.load_scoreboard(&id) {
        Ok(b) => Some(b),
        Err(Error::State(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let verdicts: Vec<_> = s.store().active_verdicts(&id)?.into_values().collect();
    Ok(Json(json!({ "manifest": m, "scoreboard": scoreboard, "verdicts": verdicts })))
}

async fn traversal(
    State(s): State<AppState>,
    UrlPath((id, j)): UrlPath<(String, usize)>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Json<Value>> {
    let m = s.store().get_run(&id)?;
    let dim = dim_index(&m, j)?;
    require_analyzed(&m)?;
    let steps = query_usize(&q, "steps")?.unwrap_or(DEFAULT_STEPS);
    if !(2..=MAX_STEPS).contains(&steps) {
        return Err(ApiError::unprocessable(format!("steps must be in 2..={MAX_STEPS}, got {steps}")));
    }
    let mode: TraversalMode = match q.get("mode") {
        Some(v) => v.parse()?,
        None => TraversalMode::Set,
    };
    let model = s.model(&m)?;
    let data = s.evidence_data(&m)?;
    let spec = TraversalSpec { steps, mode, instance_id: q.get("instance").cloned(), ..TraversalSpec::new(dim) };
    let t = traverse(&model, &data.0, &spec)?;
    let frames = t.frames.iter().map(|f| png_base64(&to_f32(f), geometry(&m))).collect::<ApiResult<Vec<_>>>()?;
    Ok(Json(json!({ "dim": j, "instance_id": t.instance_id, "mode": mode, "values": t.values, "frames": frames })))
}

async fn extremes_handler(
    State(s): State<AppState>,
    UrlPath((id, j)): UrlPath<(String, usize)>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Json<Value>> {
    let m = s.store().get_run(&id)?;
    let dim = dim_index(&m, j)?;
    require_analyzed(&m)?;
    let l = query_usize(&q, "l")?.unwrap_or(DEFAULT_EXTREMES);
    let data = s.evidence_data(&m)?;
    let (latents, train) = (&data.0, &data.1);
    let e = extremes(latents, dim, l)?;
    let entries = |rows: &[usize]| -> ApiResult<Vec<Value>> {
        rows.iter()
            .map(|&r| {
                Ok(json!({
                    "id": latents.ids[r],
                    "class": train.labels[r] + 1,
                    "value": latents.mu_row(r)[dim],
                    "image": png_base64(train.image(r), geometry(&m))?,
                }))
            })
            .collect()
    };
    Ok(Json(json!({ "dim": j, "l": l, "min": entries(&e.min)?, "max": entries(&e.max)? })))
}

async fn kde(State(s): State<AppState>, UrlPath((id, j)): UrlPath<(String, usize)>) -> ApiResult<Json<Value>> {
    let m = s.store().get_run(&id)?;
    let dim = dim_index(&m, j)?;
    require_analyzed(&m)?;
    let text = std::fs::read_to_string(s.store().path(&id, &layout::kde(dim))).map_err(Error::from)?;
    Ok(Json(serde_json::from_str(&text).map_err(Error::from)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DecodeRequest {
    z: Vec<f64>,
}

async fn decode(State(s): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Response> {
    let m = s.store().get_run(&id)?;
    let req: DecodeRequest = parse_body(&body)?;
    let d = m.latent_dim();
    if req.z.len() != d {
        return Err(ApiError::unprocessable(format!("z must have length d = {d}, got {}", req.z.len())));
    }
    if req.z.iter().any(|v| !v.is_finite()) {
        return Err(ApiError::unprocessable("z must contain finite numbers"));
    }
    let model = s.model(&m)?;
    let z: Vec<f32> = req.z.iter().map(|v| *v as f32).collect();
    let img = model.decode(&z)?;
    let (h, w, c) = geometry(&m);
    let png = encode_png(&img, h, w, c).map_err(ApiError::from)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VerdictRequest {
    verdict: String,
    #[serde(default)]
    notes: String,
    #[serde(default)]
    judge: Option<String>,
}

async fn verdict(
    State(s): State<AppState>,
    UrlPath((id, j)): UrlPath<(String, usize)>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let m = s.store().get_run(&id)?;
    let req: VerdictRequest = parse_body(&body)?;
    let v: Verdict = req.verdict.parse()?;
    let dim = dim_index(&m, j)?;
    let rec = s.store().record_verdict(&id, dim, v, &req.notes, req.judge.as_deref().unwrap_or("console"))?;
    // The report picks the verdict up right away when its evidence exists.
    let report_updated = m.stage_done("evidence") && {
        s.pipeline.report(&id, false)?;
        true
    };
    Ok(Json(json!({ "verdict": rec, "report_updated": report_updated })))
}

async fn report(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    s.store().get_run(&id)?;
    let path = s.store().path(&id, layout::REPORT_HTML);
    if !path.exists() {
        return Err(Error::State(format!("run {id} has no report; run `latentscout report --run {id}`")).into());
    }
    let html = std::fs::read_to_string(path).map_err(Error::from)?;
    Ok(([(header::CONTENT_TYPE, "text/html; charset=utf-8")], html).into_response())
}
