//! HTTP front end for interactive relighting.
//!
//! Sessions hold decoded, immutable assets behind an `Arc`; a relight
//! request clones the handle and computes on a blocking thread, so requests
//! never observe each other. A semaphore caps concurrent computations.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::multipart::MultipartError;
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use relight_core::sh::{project_envmap_seeded, EnvMap, DEFAULT_PROJECTION_SEED, MAX_BANDS};
use relight_core::temporal::BlendWeights;
use relight_core::ShCoefficients;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;
use tower_http::services::ServeDir;
use uuid::Uuid;

use crate::commands::DEFAULT_PROJECTION_SAMPLES;
use crate::error::{CliError, ErrorKind};
use crate::render::{
    decode_color, decode_mask, decode_normal_map, relight_frame, relight_png, ImageAssets, RelightSettings,
    SequenceAssets,
};

/// 4096 × 4096.
pub const DEFAULT_MAX_PIXELS: usize = 1 << 24;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub max_pixels: usize,
    pub workers: usize,
    pub ui_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            max_pixels: DEFAULT_MAX_PIXELS,
            workers: 2,
            ui_dir: None,
        }
    }
}

struct Session {
    assets: ImageAssets,
    frames: Option<SequenceAssets>,
}

struct AppState {
    sessions: Mutex<HashMap<Uuid, Arc<Session>>>,
    permits: Semaphore,
    max_pixels: usize,
}

impl AppState {
    fn session(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        let id = Uuid::parse_str(id).map_err(|_| ApiError::not_found(id))?;
        self.sessions
            .lock()
            .expect("session table lock")
            .get(&id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(&id.to_string()))
    }
}

/// An HTTP status with the CLI's error JSON as body.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    error: CliError,
}

impl ApiError {
    fn new(status: StatusCode, error: CliError) -> Self {
        Self { status, error }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, CliError::usage(format!("unknown session {id}")))
    }

    fn too_large(message: String) -> Self {
        Self::new(StatusCode::PAYLOAD_TOO_LARGE, CliError::parameter(message))
    }

    fn multipart(e: MultipartError) -> Self {
        let status = e.status();
        let status = if status == StatusCode::PAYLOAD_TOO_LARGE { status } else { StatusCode::BAD_REQUEST };
        Self::new(status, CliError::usage(format!("bad multipart body: {}", e.body_text())))
    }
}

impl From<CliError> for ApiError {
    fn from(error: CliError) -> Self {
        let status = match error.kind {
            ErrorKind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        Self::new(status, error)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        tracing::info!(status = %self.status, "{}", self.error.message);
        (self.status, [(header::CONTENT_TYPE, "application/json")], self.error.to_json()).into_response()
    }
}

pub fn router(config: ServiceConfig) -> Router {
    let state = Arc::new(AppState {
        sessions: Mutex::new(HashMap::new()),
        permits: Semaphore::new(config.workers.max(1)),
        max_pixels: config.max_pixels,
    });
    // Room for a handful of uncompressed 16-bit RGB images at the limit.
    let body_limit = config.max_pixels.saturating_mul(6).saturating_mul(8).max(1 << 20);
    let api = Router::new()
        .route("/session", post(create_session))
        .route("/session/{id}", axum::routing::delete(delete_session))
        .route("/session/{id}/meta", get(meta))
        .route("/session/{id}/relight", post(relight))
        .route("/session/{id}/sh-project", post(sh_project))
        .layer(DefaultBodyLimit::max(body_limit))
        .with_state(state);
    match config.ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(config))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// Width and height from a PNG header, without decoding pixels.
fn png_dimensions(bytes: &[u8]) -> Option<(usize, usize)> {
    const SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";
    if bytes.len() < 24 || &bytes[..8] != SIGNATURE || &bytes[12..16] != b"IHDR" {
        return None;
    }
    let w = u32::from_be_bytes(bytes[16..20].try_into().ok()?);
    let h = u32::from_be_bytes(bytes[20..24].try_into().ok()?);
    Some((w as usize, h as usize))
}

#[derive(Default)]
struct Upload {
    fields: HashMap<String, Vec<Bytes>>,
}

impl Upload {
    async fn read(mut multipart: Multipart, max_pixels: usize) -> Result<Self, ApiError> {
        let mut upload = Upload::default();
        while let Some(field) = multipart.next_field().await.map_err(ApiError::multipart)? {
            let name = field.name().unwrap_or_default().to_string();
            let data = field.bytes().await.map_err(ApiError::multipart)?;
            if let Some((w, h)) = png_dimensions(&data) {
                if w.saturating_mul(h) > max_pixels {
                    return Err(ApiError::too_large(format!(
                        "{name} is {w}x{h}, over the {max_pixels}-pixel limit"
                    )));
                }
            }
            upload.fields.entry(name).or_default().push(data);
        }
        Ok(upload)
    }

    fn one(&self, name: &str) -> Result<Option<&Bytes>, CliError> {
        match self.fields.get(name).map(Vec::as_slice) {
            None | Some([]) => Ok(None),
            Some([b]) => Ok(Some(b)),
            Some(_) => Err(CliError::usage(format!("field {name} given more than once"))),
        }
    }

    fn required(&self, name: &str) -> Result<&Bytes, CliError> {
        self.one(name)?
            .ok_or_else(|| CliError::usage(format!("missing required field {name}")))
    }

    fn all(&self, name: &str) -> &[Bytes] {
        self.fields.get(name).map_or(&[], Vec::as_slice)
    }

    fn text(&self, name: &str) -> Result<Option<String>, CliError> {
        Ok(self.one(name)?.map(|b| String::from_utf8_lossy(b).trim().to_string()))
    }

    fn flag(&self, name: &str) -> Result<bool, CliError> {
        match self.text(name)?.as_deref() {
            None | Some("false") | Some("0") | Some("") => Ok(false),
            Some("true") | Some("1") => Ok(true),
            Some(other) => Err(CliError::parameter(format!("{name} must be true or false, got {other:?}"))),
        }
    }

    fn number<T: std::str::FromStr>(&self, name: &str) -> Result<Option<T>, CliError> {
        self.text(name)?
            .map(|s| s.parse().map_err(|_| CliError::parameter(format!("{name} is not a number: {s:?}"))))
            .transpose()
    }
}

/// Decodes a session upload. Per-frame normals and masks are optional;
/// without them every frame reuses the single normals and mask.
fn build_session(upload: &Upload) -> Result<Session, CliError> {
    let flip = upload.flag("flip_normal_y")?;
    let assets = ImageAssets::decode(
        upload.required("input")?,
        upload.required("normals")?,
        upload.required("mask")?,
        upload.one("background")?.map(|b| b.as_ref()),
        flip,
    )?;
    let frames = upload.all("frame");
    if frames.is_empty() {
        return Ok(Session { assets, frames: None });
    }
    let n = frames.len();
    let per_frame = |name: &str| -> Result<Option<&[Bytes]>, CliError> {
        match upload.all(name) {
            [] => Ok(None),
            v if v.len() == n => Ok(Some(v)),
            v => Err(CliError::new(
                ErrorKind::Dimension,
                format!("{} {name} fields for {n} frames", v.len()),
            )),
        }
    };
    let seq = SequenceAssets {
        frames: frames
            .iter()
            .enumerate()
            .map(|(t, b)| decode_color(b, &format!("frame {t}")))
            .collect::<Result<_, _>>()?,
        normals: match per_frame("frame_normals")? {
            Some(v) => v
                .iter()
                .enumerate()
                .map(|(t, b)| decode_normal_map(b, flip, &format!("frame_normals {t}")))
                .collect::<Result<_, _>>()?,
            None => vec![assets.normals.clone(); n],
        },
        masks: match per_frame("frame_mask")? {
            Some(v) => v
                .iter()
                .enumerate()
                .map(|(t, b)| decode_mask(b, &format!("frame_mask {t}")))
                .collect::<Result<_, _>>()?,
            None => vec![assets.mask.clone(); n],
        },
        backgrounds: assets.background.as_ref().map(|b| vec![b.clone(); n]),
    };
    seq.check_sizes()?;
    if seq.frames[0].size() != assets.size() {
        let (w, h) = seq.frames[0].size();
        let (iw, ih) = assets.size();
        return Err(CliError::new(
            ErrorKind::Dimension,
            format!("frames are {w}x{h}, input is {iw}x{ih}"),
        ));
    }
    Ok(Session {
        assets,
        frames: Some(seq),
    })
}

async fn blocking<T: Send + 'static>(
    state: &AppState,
    f: impl FnOnce() -> Result<T, CliError> + Send + 'static,
) -> Result<T, ApiError> {
    let _permit = state.permits.acquire().await.expect("semaphore is never closed");
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::from(CliError::new(ErrorKind::Internal, format!("worker failed: {e}"))))?
        .map_err(ApiError::from)
}

#[derive(Serialize)]
struct Created {
    session_id: String,
}

async fn create_session(State(state): State<Arc<AppState>>, multipart: Multipart) -> Result<Response, ApiError> {
    let upload = Upload::read(multipart, state.max_pixels).await?;
    let session = blocking(&state, move || build_session(&upload)).await?;
    let id = Uuid::new_v4();
    let (w, h) = session.assets.size();
    state.sessions.lock().expect("session table lock").insert(id, Arc::new(session));
    tracing::info!(%id, w, h, "session created");
    Ok((StatusCode::CREATED, Json(Created { session_id: id.to_string() })).into_response())
}

async fn delete_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    let key = Uuid::parse_str(&id).map_err(|_| ApiError::not_found(&id))?;
    match state.sessions.lock().expect("session table lock").remove(&key) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(ApiError::not_found(&id)),
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct SessionMeta {
    pub session_id: String,
    pub width: usize,
    pub height: usize,
    /// Uploaded sequence length; 0 when the session holds a single image.
    pub frame_count: usize,
    pub has_background: bool,
}

async fn meta(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SessionMeta>, ApiError> {
    let session = state.session(&id)?;
    let (width, height) = session.assets.size();
    Ok(Json(SessionMeta {
        session_id: id,
        width,
        height,
        frame_count: session.frames.as_ref().map_or(0, SequenceAssets::len),
        has_background: session.assets.background.is_some(),
    }))
}

fn default_strength() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelightRequest {
    #[serde(default)]
    pub coeffs: Option<ShCoefficients>,
    #[serde(default = "default_strength")]
    pub harmonize_strength: f64,
    #[serde(default)]
    pub refine_radius: Option<usize>,
    #[serde(default = "yes")]
    pub convolve: bool,
    #[serde(default = "yes")]
    pub use_background: bool,
    /// Relight this frame of the uploaded sequence instead of the input.
    #[serde(default)]
    pub frame_index: Option<usize>,
    #[serde(default)]
    pub blend_weights: Option<BlendWeightsJson>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlendWeightsJson {
    pub spatial_w: f32,
    pub temporal_w: f32,
}

impl RelightRequest {
    pub fn settings(&self) -> RelightSettings {
        RelightSettings {
            coeffs: self.coeffs.clone(),
            harmonize_strength: self.harmonize_strength,
            refine_radius: self.refine_radius,
            convolve: self.convolve,
            use_background: self.use_background,
        }
    }
}

fn png_response(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn relight(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let session = state.session(&id)?;
    let request: RelightRequest = serde_json::from_slice(&body)
        .map_err(|e| CliError::new(ErrorKind::ShJson, format!("invalid relight request: {e}")))?;
    let settings = request.settings();
    let (bytes, warnings) = blocking(&state, move || match request.frame_index {
        None => relight_png(&session.assets, &settings),
        Some(index) => {
            let seq = session
                .frames
                .as_ref()
                .ok_or_else(|| CliError::parameter("session has no frame sequence"))?;
            let weights = request.blend_weights.map_or(BlendWeights::default(), |w| BlendWeights {
                spatial_w: w.spatial_w,
                temporal_w: w.temporal_w,
            });
            relight_frame(seq, index, &settings, weights)
        }
    })
    .await?;
    for w in warnings {
        tracing::warn!(%id, "{w}");
    }
    Ok(png_response(bytes))
}

async fn sh_project(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    multipart: Multipart,
) -> Result<Response, ApiError> {
    state.session(&id)?;
    let upload = Upload::read(multipart, state.max_pixels).await?;
    let coeffs = blocking(&state, move || {
        let env = EnvMap::new(decode_color(upload.required("envmap")?, "envmap")?)?;
        let bands = upload.number("bands")?.unwrap_or(MAX_BANDS);
        let samples = upload.number("samples")?.unwrap_or(DEFAULT_PROJECTION_SAMPLES);
        let seed = upload.number("seed")?.unwrap_or(DEFAULT_PROJECTION_SEED);
        Ok(project_envmap_seeded(&env, bands, samples, seed)?)
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], coeffs.to_json_string()).into_response())
}
