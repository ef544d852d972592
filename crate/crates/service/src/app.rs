//! Routes and request handling.

use std::collections::HashMap;
use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use basnet::data::Normalization;
use basnet::inference::predict;
use basnet::io::{decode_image, encode_cutout_png, encode_mask_png};
use basnet::model::BasNet;
use futures::StreamExt;
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;
use uuid::Uuid;

use crate::config::ServiceConfig;
use crate::pool::{PoolError, ReplicaPool};
use crate::postprocess::{postprocess_mask, PostprocessParams};
use crate::storage::{LocalStorage, Storage};

pub const TIMINGS_HEADER: &str = "x-timings-ms";
pub const CORRELATION_HEADER: &str = "x-correlation-id";
/// Room for the multipart envelope on top of the image byte limit.
const MULTIPART_SLACK: usize = 64 * 1024;
/// Most bytes of a rejected upload read and thrown away before replying.
const DRAIN_LIMIT: usize = 64 * 1024 * 1024;

/// The loaded model and its identity.
pub struct LoadedModel {
    pub pool: Arc<ReplicaPool>,
    /// SHA-256 of the weight archive, as recorded in the checkpoint manifest.
    pub checksum: String,
    pub config_hash: String,
    pub architecture: String,
}

pub struct AppState {
    pub config: ServiceConfig,
    pub model: Option<LoadedModel>,
    pub storage: LocalStorage,
    pub postprocess: PostprocessParams,
    pub http: reqwest::Client,
    pub started: Instant,
}

impl AppState {
    /// `model` is `None` for a service that reports itself degraded.
    pub fn new(
        config: ServiceConfig,
        model: Option<BasNet>,
        checksum: String,
        public_base: &str,
    ) -> basnet::Result<Self> {
        let postprocess = config.postprocess();
        postprocess.validate()?;
        let storage = LocalStorage::new(
            &config.storage_root,
            format!("{}/v1/storage", public_base.trim_end_matches('/')),
        )?;
        let model = model.map(|m| LoadedModel {
            config_hash: m.config().hash(),
            architecture: m.config().architecture.label().to_string(),
            pool: Arc::new(ReplicaPool::new(m, config.pool_size, config.queue_capacity)),
            checksum,
        });
        let http = reqwest::Client::builder()
            .timeout(Duration::from_millis(config.fetch_timeout_ms))
            .build()
            .map_err(|e| basnet::Error::Config(format!("http client: {e}")))?;
        Ok(Self {
            config,
            model,
            storage,
            postprocess,
            http,
            started: Instant::now(),
        })
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/remove", post(remove))
        .route("/v1/health", get(health))
        .route("/v1/storage/:key", get(stored))
        .with_state(state)
}

/// A bound listener plus the app; `addr` is known before serving starts.
pub struct Server {
    pub addr: SocketAddr,
    listener: TcpListener,
    app: Router,
}

impl Server {
    /// Loads the checkpoint named in the config and binds `host:port`.
    pub async fn bind(config: ServiceConfig) -> basnet::Result<Self> {
        let (model, checksum) = BasNet::load(&config.model_path)?;
        Self::bind_with(config, Some(model), checksum).await
    }

    pub async fn bind_with(
        config: ServiceConfig,
        model: Option<BasNet>,
        checksum: String,
    ) -> basnet::Result<Self> {
        let listener = TcpListener::bind((config.host.as_str(), config.port)).await?;
        let addr = listener.local_addr()?;
        let base = config
            .public_base_url
            .clone()
            .unwrap_or_else(|| format!("http://{addr}"));
        let state = Arc::new(AppState::new(config, model, checksum, &base)?);
        log::info!("listening on {addr}");
        Ok(Self {
            addr,
            listener,
            app: router(state),
        })
    }

    pub async fn run(self) -> std::io::Result<()> {
        axum::serve(self.listener, self.app).await
    }
}

/// A structured error body: `{"error": {"code", "message", "correlation_id"}}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub retry_after: Option<u64>,
    pub correlation_id: Uuid,
}

impl ApiError {
    fn new(id: Uuid, status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            retry_after: None,
            correlation_id: id,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            log::error!("{} {}: {}", self.correlation_id, self.code, self.message);
        }
        let body = json!({"error": {"code": self.code, "message": self.message, "correlation_id": self.correlation_id.to_string()}});
        let mut resp = (self.status, Json(body)).into_response();
        let h = resp.headers_mut();
        h.insert(
            CORRELATION_HEADER,
            HeaderValue::from_str(&self.correlation_id.to_string()).expect("uuid is ascii"),
        );
        if let Some(s) = self.retry_after {
            h.insert(header::RETRY_AFTER, HeaderValue::from(s));
        }
        resp
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    RgbaPng,
    MaskPng,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResponseMode {
    Inline,
    StoredUrl,
}

#[derive(Default)]
struct Timings(Vec<(&'static str, f64)>);

impl Timings {
    fn lap(&mut self, stage: &'static str, since: Instant) -> Instant {
        self.0.push((stage, since.elapsed().as_secs_f64() * 1e3));
        Instant::now()
    }

    fn header(&self) -> String {
        self.0
            .iter()
            .map(|(k, v)| format!("{k}={v:.2}"))
            .collect::<Vec<_>>()
            .join(",")
    }

    fn json(&self) -> serde_json::Value {
        serde_json::Value::Object(
            self.0
                .iter()
                .map(|(k, v)| (k.to_string(), json!(v)))
                .collect(),
        )
    }
}

#[derive(Deserialize)]
struct UrlSource {
    image_url: String,
}

fn parse_options(
    id: Uuid,
    q: &HashMap<String, String>,
) -> Result<(OutputFormat, ResponseMode), ApiError> {
    let bad = |m: String| ApiError::new(id, StatusCode::BAD_REQUEST, "invalid_parameter", m);
    let format = match q.get("output_format").map(String::as_str) {
        None | Some("rgba_png") => OutputFormat::RgbaPng,
        Some("mask_png") => OutputFormat::MaskPng,
        Some(o) => {
            return Err(bad(format!(
                "output_format must be rgba_png or mask_png, got {o:?}"
            )))
        }
    };
    let mode = match q.get("response_mode").map(String::as_str) {
        None | Some("inline") => ResponseMode::Inline,
        Some("stored_url") => ResponseMode::StoredUrl,
        Some(o) => {
            return Err(bad(format!(
                "response_mode must be inline or stored_url, got {o:?}"
            )))
        }
    };
    Ok((format, mode))
}

fn too_large(id: Uuid, limit: usize) -> ApiError {
    ApiError::new(
        id,
        StatusCode::PAYLOAD_TOO_LARGE,
        "payload_too_large",
        format!("payload exceeds {limit} bytes"),
    )
}

async fn fetch(state: &AppState, id: Uuid, url: &str) -> Result<Vec<u8>, ApiError> {
    let limit = state.config.max_bytes;
    let unreachable = |m: String| ApiError::new(id, StatusCode::BAD_REQUEST, "unreachable_url", m);
    let mut resp = state
        .http
        .get(url)
        .send()
        .await
        .map_err(|e| unreachable(format!("{url}: {e}")))?;
    if !resp.status().is_success() {
        return Err(unreachable(format!("{url} answered {}", resp.status())));
    }
    if resp.content_length().is_some_and(|n| n as usize > limit) {
        return Err(too_large(id, limit));
    }
    let mut out = Vec::new();
    while let Some(chunk) = resp
        .chunk()
        .await
        .map_err(|e| unreachable(format!("{url}: {e}")))?
    {
        if out.len() + chunk.len() > limit {
            return Err(too_large(id, limit));
        }
        out.extend_from_slice(&chunk);
    }
    Ok(out)
}

/// Reads the body into memory, or `Err(None)` once it passes `cap` bytes.
/// An oversized body is drained rather than abandoned.
async fn read_capped(body: Body, cap: usize) -> Result<Vec<u8>, Option<String>> {
    let mut stream = body.into_data_stream();
    let mut out = Vec::new();
    while let Some(chunk) = stream.next().await {
        let chunk = chunk.map_err(|e| Some(e.to_string()))?;
        if out.len() + chunk.len() > cap {
            drop(out);
            drain_stream(stream).await;
            return Err(None);
        }
        out.extend_from_slice(&chunk);
    }
    Ok(out)
}

/// Discards up to `DRAIN_LIMIT` bytes of a rejected upload. Closing the
/// connection mid-upload makes many clients fail with a broken pipe before
/// they read the 413.
async fn drain(body: Body) {
    drain_stream(body.into_data_stream()).await
}

async fn drain_stream(mut stream: axum::body::BodyDataStream) {
    let mut seen = 0usize;
    while let Some(Ok(chunk)) = stream.next().await {
        seen += chunk.len();
        if seen > DRAIN_LIMIT {
            break;
        }
    }
}

/// Pulls the image bytes out of whichever request shape was used.
async fn ingest(
    state: &AppState,
    id: Uuid,
    headers: &HeaderMap,
    body: Body,
) -> Result<Vec<u8>, ApiError> {
    let limit = state.config.max_bytes;
    let content_type = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("")
        .to_string();
    let mime = content_type
        .split(';')
        .next()
        .unwrap_or("")
        .trim()
        .to_ascii_lowercase();
    let envelope = if mime == "multipart/form-data" {
        limit + MULTIPART_SLACK
    } else {
        limit
    };
    let declared = headers
        .get(header::CONTENT_LENGTH)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse::<usize>().ok());
    if declared.is_some_and(|n| n > envelope) {
        drain(body).await;
        return Err(too_large(id, limit));
    }
    let bytes = read_capped(body, envelope).await.map_err(|e| match e {
        Some(e) => ApiError::new(id, StatusCode::BAD_REQUEST, "invalid_body", e),
        None => too_large(id, limit),
    })?;
    let bad = |code: &'static str, m: String| ApiError::new(id, StatusCode::BAD_REQUEST, code, m);

    let image = match mime.as_str() {
        "multipart/form-data" => {
            let boundary = multer::parse_boundary(&content_type).map_err(|e| bad("invalid_multipart", e.to_string()))?;
            let stream = futures::stream::once(async move { Ok::<_, Infallible>(bytes) });
            let mut form = multer::Multipart::new(stream, boundary);
            let mut found = None;
            while let Some(field) = form.next_field().await.map_err(|e| bad("invalid_multipart", e.to_string()))? {
                if field.name() == Some("image") {
                    found = Some(field.bytes().await.map_err(|e| bad("invalid_multipart", e.to_string()))?.to_vec());
                    break;
                }
            }
            found.ok_or_else(|| bad("missing_image", "multipart body has no \"image\" field".into()))?
        }
        "application/json" => {
            let src: UrlSource = serde_json::from_slice(&bytes).map_err(|e| bad("invalid_json", e.to_string()))?;
            fetch(state, id, &src.image_url).await?
        }
        m if m.starts_with("image/") || m == "application/octet-stream" => bytes,
        _ => {
            return Err(ApiError::new(
                id,
                StatusCode::UNSUPPORTED_MEDIA_TYPE,
                "unsupported_content_type",
                format!("expected multipart/form-data, application/json or an image type, got {content_type:?}"),
            ))
        }
    };
    if image.len() > limit {
        return Err(too_large(id, limit));
    }
    if image.is_empty() {
        return Err(bad("empty_image", "no image bytes".into()));
    }
    Ok(image)
}

async fn remove(
    State(state): State<Arc<AppState>>,
    Query(query): Query<HashMap<String, String>>,
    headers: HeaderMap,
    body: Body,
) -> Result<Response, ApiError> {
    let id = Uuid::new_v4();
    let (format, mode) = parse_options(id, &query)?;
    let model = state.model.as_ref().ok_or_else(|| {
        ApiError::new(
            id,
            StatusCode::SERVICE_UNAVAILABLE,
            "model_unavailable",
            "no model is loaded",
        )
    })?;
    let mut timings = Timings::default();
    let t = Instant::now();
    let bytes = ingest(&state, id, &headers, body).await?;
    let t = timings.lap("ingest", t);

    let image = tokio::task::spawn_blocking(move || decode_image(&bytes))
        .await
        .map_err(|e| {
            ApiError::new(
                id,
                StatusCode::INTERNAL_SERVER_ERROR,
                "internal",
                e.to_string(),
            )
        })?
        .map_err(|e| {
            ApiError::new(
                id,
                StatusCode::BAD_REQUEST,
                "undecodable_image",
                e.to_string(),
            )
        })?;
    let t = timings.lap("decode", t);

    let image = Arc::new(image);
    let size = state.config.input_size;
    let input = Arc::clone(&image);
    let map = model
        .pool
        .run(move |net| predict(net, &input, size, &Normalization::default()))
        .await
        .map_err(|e| match e {
            PoolError::Busy => ApiError {
                retry_after: Some(state.config.retry_after_s),
                ..ApiError::new(
                    id,
                    StatusCode::SERVICE_UNAVAILABLE,
                    "overloaded",
                    "all model replicas are busy",
                )
            },
            PoolError::Crashed => ApiError::new(
                id,
                StatusCode::INTERNAL_SERVER_ERROR,
                "inference_failed",
                "inference worker panicked",
            ),
        })?
        .map_err(|e| {
            ApiError::new(
                id,
                StatusCode::INTERNAL_SERVER_ERROR,
                "inference_failed",
                e.to_string(),
            )
        })?;
    let t = timings.lap("inference", t);

    let params = state.postprocess;
    let (png, t) = tokio::task::spawn_blocking(move || {
        let mut local = Timings::default();
        let cleaned = postprocess_mask(&map, &params);
        let t = local.lap("postprocess", t);
        let png = match format {
            OutputFormat::RgbaPng => encode_cutout_png(&image, &cleaned),
            OutputFormat::MaskPng => encode_mask_png(&cleaned),
        };
        (png.map(|p| (p, local)), t)
    })
    .await
    .map_err(|e| {
        ApiError::new(
            id,
            StatusCode::INTERNAL_SERVER_ERROR,
            "internal",
            e.to_string(),
        )
    })?;
    let (png, local) = png.map_err(|e| {
        ApiError::new(
            id,
            StatusCode::INTERNAL_SERVER_ERROR,
            "encode_failed",
            e.to_string(),
        )
    })?;
    timings.0.extend(local.0);
    let t = timings.lap("encode", t);
    let (width, height) = png_dims(&png);

    let mut resp = match mode {
        ResponseMode::Inline => ([(header::CONTENT_TYPE, "image/png")], png).into_response(),
        ResponseMode::StoredUrl => {
            let storage = state.storage.clone();
            let url = tokio::task::spawn_blocking(move || storage.put(&png, "png"))
                .await
                .map_err(|e| {
                    ApiError::new(
                        id,
                        StatusCode::INTERNAL_SERVER_ERROR,
                        "internal",
                        e.to_string(),
                    )
                })?
                .map_err(|e| {
                    ApiError::new(
                        id,
                        StatusCode::INTERNAL_SERVER_ERROR,
                        "storage_failed",
                        e.to_string(),
                    )
                })?;
            timings.lap("store", t);
            Json(json!({"output_url": url, "width": width, "height": height, "timings_ms": timings.json()})).into_response()
        }
    };
    let h = resp.headers_mut();
    h.insert(
        TIMINGS_HEADER,
        HeaderValue::from_str(&timings.header()).expect("ascii"),
    );
    h.insert(
        CORRELATION_HEADER,
        HeaderValue::from_str(&id.to_string()).expect("ascii"),
    );
    Ok(resp)
}

/// Width and height from a PNG IHDR chunk.
fn png_dims(png: &[u8]) -> (u32, u32) {
    let be = |i: usize| u32::from_be_bytes([png[i], png[i + 1], png[i + 2], png[i + 3]]);
    (be(16), be(20))
}

async fn health(State(state): State<Arc<AppState>>) -> Response {
    let uptime = state.started.elapsed().as_secs_f64();
    match &state.model {
        Some(m) => Json(json!({
            "status": "ok",
            "model_checksum": m.checksum,
            "config_hash": m.config_hash,
            "architecture": m.architecture,
            "replicas": m.pool.size(),
            "queue_depth": m.pool.queue_depth(),
            "in_flight": m.pool.in_flight(),
            "inferences": m.pool.completed(),
            "uptime_s": uptime,
        }))
        .into_response(),
        None => (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(json!({"status": "degraded", "reason": "model not loaded", "queue_depth": 0, "uptime_s": uptime})),
        )
            .into_response(),
    }
}

async fn stored(
    State(state): State<Arc<AppState>>,
    Path(key): Path<String>,
) -> Result<Response, ApiError> {
    let id = Uuid::new_v4();
    let bytes = state.storage.read(&key).ok_or_else(|| {
        ApiError::new(
            id,
            StatusCode::NOT_FOUND,
            "not_found",
            format!("no stored object {key:?}"),
        )
    })?;
    let content_type = if key.ends_with(".png") {
        "image/png"
    } else {
        "application/octet-stream"
    };
    Ok(([(header::CONTENT_TYPE, content_type)], bytes).into_response())
}
