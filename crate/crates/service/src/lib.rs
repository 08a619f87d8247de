//! HTTP JSON API over the pipeline. All routes live under `/v1`.
//!
//! | route | method | body |
//! |---|---|---|
//! | `/v1/health` | GET | status `ok` or `empty`, versions |
//! | `/v1/query` | POST | [`QueryRequest`] -> [`QueryResponse`] |
//! | `/v1/images` | GET | manifest images with annotations and queries |
//! | `/v1/images/{id}/file` | GET | raw image bytes |
//! | `/v1/clouds/{id}` | GET | points and ground-truth map names |
//! | `/v1/clouds/{id}/gt/{affordance}` | GET | ground-truth scores |
//! | `/v1/scores/{token}` | GET | scores withheld from a large response |
//! | `/v1/manifest/stats` | GET | the validator's statistics JSON |
//! | `/v1/admin/reload` | POST | rebuilds the engine and swaps it in |
//!
//! Refusals are ordinary 200 responses. Errors carry `{"error": ...}` with
//! 400 (malformed request), 404 (unknown id), 409 (reload in progress),
//! 422 (reload failed; the previous engine keeps serving), 500 (pipeline
//! fault) or 503 (no engine loaded, grounding backend down).

use std::collections::{BTreeMap, VecDeque};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use tower_http::cors::{Any, CorsLayer};

use tafs_core::bench::manifest::{area_of, MANIFEST_SCHEMA_VERSION};
use tafs_core::bench::runner::REPORT_SCHEMA_VERSION;
use tafs_core::bench::validate::stats_json;
use tafs_core::cloudstore::STORE_SCHEMA_VERSION;
use tafs_core::config::Config;
use tafs_core::pipeline::{Engine, EngineError, PipelineError, QueryInput};
use tafs_core::types::StageTimings;
use tafs_core::util::sha256_hex;
use tafs_core::vlm::ImageInput;
use tafs_core::{DecisionOutcome, GroundingResult, PointCloud, ReasonCode, RigidTransform, SegmentationResult};

/// Maps with more points than this are returned by token.
pub const INLINE_SCORE_LIMIT: usize = 10_000;
const SCORE_CACHE_CAPACITY: usize = 256;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRequest {
    #[serde(default)]
    pub image_id: Option<String>,
    #[serde(default)]
    pub image_b64: Option<String>,
    pub text: String,
    /// Observed object points to register against the canonical cloud.
    #[serde(default)]
    pub query_cloud: Option<Vec<[f64; 3]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    /// `proceed` or `refuse`.
    pub decision: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason_code: Option<ReasonCode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grounding: Option<GroundingResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cloud_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affordance: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores_token: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<RigidTransform>,
    pub timing_ms: StageTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoresPayload {
    pub cloud_id: String,
    pub affordance: String,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudPayload {
    pub cloud_id: String,
    pub label: String,
    pub points: Vec<[f64; 3]>,
    pub gt_maps: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSummary {
    pub label: String,
    pub bbox: [f64; 4],
    pub cloud_id: String,
    pub affordances: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySummary {
    pub query_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSummary {
    pub image_id: String,
    pub scene_id: String,
    pub room_type: String,
    pub area: String,
    pub source: String,
    pub annotations: Vec<AnnotationSummary>,
    pub queries: Vec<QuerySummary>,
}

/// Optional path overrides for a reload; absent fields keep the current value.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReloadRequest {
    #[serde(default)]
    pub manifest: Option<PathBuf>,
    #[serde(default)]
    pub store: Option<PathBuf>,
    #[serde(default)]
    pub weights: Option<PathBuf>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Default)]
struct ScoreCache {
    order: VecDeque<String>,
    entries: BTreeMap<String, Arc<ScoresPayload>>,
}

impl ScoreCache {
    fn insert(&mut self, token: String, payload: ScoresPayload) {
        if self.entries.contains_key(&token) {
            return;
        }
        if self.order.len() == SCORE_CACHE_CAPACITY {
            if let Some(old) = self.order.pop_front() {
                self.entries.remove(&old);
            }
        }
        self.order.push_back(token.clone());
        self.entries.insert(token, Arc::new(payload));
    }
}

/// Shared service state. The engine is an immutable snapshot; reload builds
/// a new one off to the side and swaps the pointer.
pub struct AppState {
    config: RwLock<Config>,
    engine: RwLock<Option<Arc<Engine>>>,
    reloading: AtomicBool,
    scores: Mutex<ScoreCache>,
    inline_limit: usize,
}

/// Held while a reload runs; a second reload is refused until it drops.
pub struct ReloadGuard<'a>(&'a AtomicBool);

impl Drop for ReloadGuard<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::SeqCst);
    }
}

impl AppState {
    /// State without an engine; `/v1/health` reports `empty` until a reload.
    pub fn empty(config: Config) -> Self {
        Self {
            config: RwLock::new(config),
            engine: RwLock::new(None),
            reloading: AtomicBool::new(false),
            scores: Mutex::new(ScoreCache::default()),
            inline_limit: INLINE_SCORE_LIMIT,
        }
    }

    /// Loads the engine named by `config`; on failure the state stays empty
    /// and the error is returned alongside.
    pub fn load(config: Config) -> (Self, Option<EngineError>) {
        let state = Self::empty(config.clone());
        if config.manifest.is_none() {
            return (state, None);
        }
        match Engine::load(&config) {
            Ok(e) => {
                state.install(e);
                (state, None)
            }
            Err(err) => (state, Some(err)),
        }
    }

    pub fn with_engine(config: Config, engine: Engine) -> Self {
        let state = Self::empty(config);
        state.install(engine);
        state
    }

    pub fn with_inline_limit(mut self, limit: usize) -> Self {
        self.inline_limit = limit;
        self
    }

    pub fn engine(&self) -> Option<Arc<Engine>> {
        self.engine.read().expect("engine lock").clone()
    }

    fn install(&self, engine: Engine) {
        *self.engine.write().expect("engine lock") = Some(Arc::new(engine));
    }

    pub fn config(&self) -> Config {
        self.config.read().expect("config lock").clone()
    }

    pub fn try_begin_reload(&self) -> Option<ReloadGuard<'_>> {
        self.reloading
            .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
            .ok()
            .map(|_| ReloadGuard(&self.reloading))
    }

    fn require_engine(&self) -> ApiResult<Arc<Engine>> {
        self.engine()
            .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no engine loaded"))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let cors = match state.config().cors_origin {
        Some(origin) => match HeaderValue::from_str(&origin) {
            Ok(v) => CorsLayer::new().allow_origin(v),
            Err(_) => {
                log::warn!("ignoring unusable cors_origin '{origin}'");
                CorsLayer::new()
            }
        },
        None => CorsLayer::new().allow_origin(Any),
    }
    .allow_methods(Any)
    .allow_headers(Any);
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/query", post(query))
        .route("/v1/images", get(images))
        .route("/v1/images/{id}/file", get(image_file))
        .route("/v1/clouds/{id}", get(cloud))
        .route("/v1/clouds/{id}/gt/{affordance}", get(cloud_gt))
        .route("/v1/scores/{token}", get(scores))
        .route("/v1/manifest/stats", get(stats))
        .route("/v1/admin/reload", post(reload))
        .layer(cors)
        .with_state(state)
}

/// Binds `addr` and serves until the process stops.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

async fn health(State(s): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let engine = s.engine();
    Json(serde_json::json!({
        "status": if engine.is_some() { "ok" } else { "empty" },
        "versions": {
            "service": env!("CARGO_PKG_VERSION"),
            "manifest_schema": MANIFEST_SCHEMA_VERSION,
            "report_schema": REPORT_SCHEMA_VERSION,
            "store_schema": STORE_SCHEMA_VERSION,
        },
        "backend": engine.as_ref().map(|e| e.backend_name()),
        "manifest": engine.as_ref().map(|e| e.manifest().name.clone()),
        "images": engine.as_ref().map(|e| e.manifest().images.len()),
        "reloading": s.reloading.load(Ordering::SeqCst),
    }))
}

fn pipeline_error(e: PipelineError) -> ApiError {
    let status = match &e {
        PipelineError::UnknownImage(_) => StatusCode::NOT_FOUND,
        e if e.is_backend_failure() => StatusCode::SERVICE_UNAVAILABLE,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    };
    ApiError::new(status, e.to_string())
}

fn build_input(engine: &Engine, req: QueryRequest) -> ApiResult<QueryInput> {
    let mut image = match &req.image_id {
        Some(id) => {
            if engine.manifest().image(id).is_none() {
                return Err(ApiError::new(StatusCode::NOT_FOUND, format!("unknown image '{id}'")));
            }
            if req.image_b64.is_some() {
                ImageInput::from_id(id.clone())
            } else {
                engine.image_input(id).map_err(pipeline_error)?
            }
        }
        None => ImageInput::default(),
    };
    if let Some(b64) = &req.image_b64 {
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(b64.trim())
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("image_b64: {e}")))?;
        image.bytes = Some(Arc::new(bytes));
    }
    if image.image_id.is_none() && image.bytes.is_none() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "request needs image_id or image_b64"));
    }
    let query_cloud = req
        .query_cloud
        .map(|pts| PointCloud::new("query", pts))
        .transpose()
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("query_cloud: {e}")))?;
    Ok(QueryInput {
        image,
        text: req.text,
        query_cloud,
    })
}

fn score_token(config_hash: &str, cloud_id: &str, affordance: &str, scores: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(scores.len() * 8 + 128);
    for part in [config_hash, cloud_id, affordance] {
        bytes.extend_from_slice(part.as_bytes());
        bytes.push(0);
    }
    for s in scores {
        bytes.extend_from_slice(&s.to_le_bytes());
    }
    sha256_hex(&bytes)[..32].to_string()
}

fn respond(s: &AppState, result: SegmentationResult) -> QueryResponse {
    let mut out = QueryResponse {
        decision: String::new(),
        label: None,
        reason_code: None,
        message: None,
        grounding: result.grounding,
        cloud_id: None,
        affordance: None,
        num_points: None,
        scores: None,
        scores_token: None,
        transform: result.transform,
        timing_ms: result.timing_ms,
    };
    match result.decision {
        DecisionOutcome::Refuse { reason_code, message } => {
            out.decision = "refuse".into();
            out.reason_code = Some(reason_code);
            out.message = Some(message);
        }
        DecisionOutcome::Proceed { label } => {
            out.decision = "proceed".into();
            out.label = Some(label);
        }
    }
    if let Some(map) = result.map {
        out.cloud_id = Some(map.cloud_id().to_string());
        out.affordance = Some(map.affordance().to_string());
        out.num_points = Some(map.len());
        if map.len() <= s.inline_limit {
            out.scores = Some(map.scores().to_vec());
        } else {
            let token = score_token(&s.config().hash(), map.cloud_id(), map.affordance(), map.scores());
            s.scores.lock().expect("score cache").insert(
                token.clone(),
                ScoresPayload {
                    cloud_id: map.cloud_id().to_string(),
                    affordance: map.affordance().to_string(),
                    scores: map.scores().to_vec(),
                },
            );
            out.scores_token = Some(token);
        }
    }
    out
}

async fn query(State(s): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<QueryResponse>> {
    let req: QueryRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("malformed query request: {e}")))?;
    let engine = s.require_engine()?;
    let input = build_input(&engine, req)?;
    let result = tokio::task::spawn_blocking(move || engine.run(&input))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(pipeline_error)?;
    Ok(Json(respond(&s, result)))
}

async fn images(State(s): State<Arc<AppState>>) -> ApiResult<Json<Vec<ImageSummary>>> {
    let engine = s.require_engine()?;
    let m = engine.manifest();
    let scenes = m.scenes_by_id();
    let queries = m.queries_by_id();
    let list = m
        .images
        .iter()
        .map(|img| {
            let room_type = scenes
                .get(img.scene_id.as_str())
                .map(|sc| sc.room_type.clone())
                .unwrap_or_default();
            ImageSummary {
                image_id: img.image_id.clone(),
                scene_id: img.scene_id.clone(),
                area: area_of(&room_type).unwrap_or_default().to_string(),
                room_type,
                source: img.source.clone(),
                annotations: img
                    .annotations
                    .iter()
                    .map(|a| AnnotationSummary {
                        label: a.label.clone(),
                        bbox: a.bbox,
                        cloud_id: a.cloud_id.clone(),
                        affordances: a.affordances.clone(),
                    })
                    .collect(),
                queries: img
                    .applicable_query_ids
                    .iter()
                    .filter_map(|q| queries.get(q.as_str()))
                    .map(|q| QuerySummary {
                        query_id: q.query_id.clone(),
                        text: q.text.clone(),
                    })
                    .collect(),
            }
        })
        .collect();
    Ok(Json(list))
}

async fn image_file(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let engine = s.require_engine()?;
    let path = engine
        .image_path(&id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown image '{id}'")))?;
    let bytes = tokio::task::spawn_blocking({
        let path = path.clone();
        move || std::fs::read(path)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
    .map_err(|e| ApiError::new(StatusCode::NOT_FOUND, format!("{}: {e}", path.display())))?;
    let mime = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        _ => "application/octet-stream",
    };
    Ok(([(header::CONTENT_TYPE, mime)], bytes).into_response())
}

async fn cloud(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<CloudPayload>> {
    let engine = s.require_engine()?;
    let rec = engine
        .store()
        .get(&id)
        .map_err(|e| ApiError::new(StatusCode::NOT_FOUND, e.to_string()))?;
    Ok(Json(CloudPayload {
        cloud_id: rec.id().to_string(),
        label: rec.label.clone(),
        points: rec.cloud.points().to_vec(),
        gt_maps: rec.gt_maps.keys().cloned().collect(),
    }))
}

async fn cloud_gt(
    State(s): State<Arc<AppState>>,
    Path((id, affordance)): Path<(String, String)>,
) -> ApiResult<Json<ScoresPayload>> {
    let engine = s.require_engine()?;
    let rec = engine
        .store()
        .get(&id)
        .map_err(|e| ApiError::new(StatusCode::NOT_FOUND, e.to_string()))?;
    let map = rec.gt_map(&affordance).ok_or_else(|| {
        ApiError::new(StatusCode::NOT_FOUND, format!("cloud '{id}' has no '{affordance}' map"))
    })?;
    Ok(Json(ScoresPayload {
        cloud_id: id,
        affordance,
        scores: map.scores().to_vec(),
    }))
}

async fn scores(State(s): State<Arc<AppState>>, Path(token): Path<String>) -> ApiResult<Json<ScoresPayload>> {
    let cache = s.scores.lock().expect("score cache");
    cache
        .entries
        .get(&token)
        .map(|p| Json(ScoresPayload::clone(p)))
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown or expired token '{token}'")))
}

async fn stats(State(s): State<Arc<AppState>>) -> ApiResult<Response> {
    let engine = s.require_engine()?;
    Ok((
        [(header::CONTENT_TYPE, "application/json")],
        stats_json(engine.stats()),
    )
        .into_response())
}

async fn reload(State(s): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let req: ReloadRequest = if body.iter().all(u8::is_ascii_whitespace) {
        ReloadRequest::default()
    } else {
        serde_json::from_slice(&body)
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("malformed reload request: {e}")))?
    };
    let Some(_guard) = s.try_begin_reload() else {
        return Err(ApiError::new(StatusCode::CONFLICT, "a reload is already in progress"));
    };
    let mut config = s.config();
    if req.manifest.is_some() {
        config.manifest = req.manifest;
    }
    if req.store.is_some() {
        config.store = req.store;
    }
    if req.weights.is_some() {
        config.weights = req.weights;
    }
    let candidate = config.clone();
    let built = tokio::task::spawn_blocking(move || Engine::load(&candidate))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    match built {
        Ok(engine) => {
            let summary = serde_json::json!({
                "reloaded": true,
                "manifest": engine.manifest().name,
                "images": engine.manifest().images.len(),
            });
            *s.config.write().expect("config lock") = config;
            s.install(engine);
            let mut cache = s.scores.lock().expect("score cache");
            *cache = ScoreCache::default();
            Ok(Json(summary).into_response())
        }
        Err(e) => {
            log::warn!("reload failed, keeping the current engine: {e}");
            Ok((
                StatusCode::UNPROCESSABLE_ENTITY,
                Json(serde_json::json!({ "reloaded": false, "error": e.to_string() })),
            )
                .into_response())
        }
    }
}
