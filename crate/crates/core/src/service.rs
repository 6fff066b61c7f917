//! HTTP inference service over one loaded model (and, for a discrete model,
//! its atlas). The model is shared read-only between requests.
//!
//! | route               | request                                   | response                       |
//! |---------------------|-------------------------------------------|--------------------------------|
//! | `GET /info`         |                                           | JSON model summary             |
//! | `POST /encode`      | WAV                                       | JSON latent series             |
//! | `POST /decode`      | JSON latent series                        | WAV                            |
//! | `POST /reconstruct` | WAV                                       | WAV                            |
//! | `POST /interpolate` | JSON `{a, b, curve}`, clips base64 WAV    | WAV                            |
//! | `GET /atlas`        | optional `?descriptor=centroid`           | JSON atlas records and orders  |
//! | `POST /target`      | JSON `{descriptor, values, gain_db?}`     | JSON `{codes, wav_base64}`     |
//!
//! Errors are JSON `{"error": ..., "kind": ...}` with a 4xx/5xx status.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::atlas::{synthesize_target, Descriptor, DescriptorAtlas};
use crate::corpus::{decode_wav, encode_wav};
use crate::dsp::AudioBuffer;
use crate::error::Error;
use crate::latent::LatentSeries;
use crate::model::{Curve, Model};

/// Longest clip (or rendered output) the service accepts.
pub const MAX_AUDIO_SECONDS: f64 = 30.0;
/// Raw request body cap; base64 clips inside JSON stay under it at 30 s.
pub const MAX_BODY_BYTES: usize = 16 * 1024 * 1024;

pub struct ServiceState {
    pub model: Model,
    pub atlas: Option<DescriptorAtlas>,
}

/// An error answer: status plus a machine-readable body.
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

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InvalidArgument(_)
            | Error::Parse(_)
            | Error::UnsupportedFormat(_)
            | Error::Format(_) => StatusCode::BAD_REQUEST,
            Error::InvalidState(_) => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let kind = match self.status {
            StatusCode::BAD_REQUEST => "bad_request",
            StatusCode::NOT_FOUND => "not_found",
            StatusCode::PAYLOAD_TOO_LARGE => "too_large",
            StatusCode::CONFLICT => "invalid_state",
            _ => "internal",
        };
        (
            self.status,
            [(header::CONTENT_TYPE, "application/json")],
            json!({ "error": self.message, "kind": kind }).to_string(),
        )
            .into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

fn wav_response(audio: &AudioBuffer) -> Response {
    ([(header::CONTENT_TYPE, "audio/wav")], encode_wav(audio)).into_response()
}

fn json_response(body: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn check_duration(samples: usize, sample_rate: u32) -> Result<(), ApiError> {
    let secs = samples as f64 / sample_rate as f64;
    if secs > MAX_AUDIO_SECONDS {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            format!("audio of {secs:.1} s exceeds the {MAX_AUDIO_SECONDS} s limit"),
        ));
    }
    Ok(())
}

fn read_clip(state: &ServiceState, bytes: &[u8]) -> Result<AudioBuffer, ApiError> {
    let audio = decode_wav(bytes)?;
    check_duration(audio.len(), audio.sample_rate)?;
    let sr = state.model.params().sample_rate;
    if audio.sample_rate != sr {
        return Err(ApiError::bad_request(format!(
            "clip is {} Hz, model expects {sr} Hz",
            audio.sample_rate
        )));
    }
    Ok(audio)
}

/// Frames of output a series of `n` frames renders to, checked against the limit.
fn check_frames(state: &ServiceState, n: usize) -> Result<(), ApiError> {
    let p = state.model.params();
    check_duration(p.samples_for_frames(n), p.sample_rate)
}

/// Runs blocking inference off the async executor.
async fn blocking<F>(state: Arc<ServiceState>, f: F) -> ApiResult
where
    F: FnOnce(&ServiceState) -> ApiResult + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&state))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

async fn info(State(s): State<Arc<ServiceState>>) -> Response {
    let p = s.model.params();
    let mut body = json!({
        "model_kind": s.model.kind().name(),
        "d_z": s.model.d_z(),
        "sample_rate": p.sample_rate,
        "fft_size": p.fft_size,
        "hop": p.hop,
        "d_x": p.d_x(),
        "max_audio_seconds": MAX_AUDIO_SECONDS,
        "atlas": s.atlas.is_some(),
    });
    if let Some(k) = s.model.k() {
        body["k"] = json!(k);
    }
    json_response(body.to_string())
}

async fn encode(State(s): State<Arc<ServiceState>>, body: Bytes) -> ApiResult {
    blocking(s, move |s| {
        let audio = read_clip(s, &body)?;
        Ok(json_response(s.model.encode_series(&audio)?.to_json()))
    })
    .await
}

async fn decode(State(s): State<Arc<ServiceState>>, body: Bytes) -> ApiResult {
    blocking(s, move |s| {
        let text = std::str::from_utf8(&body).map_err(|_| ApiError::bad_request("body is not UTF-8"))?;
        let series = LatentSeries::from_json(text)?;
        check_frames(s, series.len())?;
        Ok(wav_response(&s.model.decode_series(&series)?))
    })
    .await
}

async fn reconstruct(State(s): State<Arc<ServiceState>>, body: Bytes) -> ApiResult {
    blocking(s, move |s| {
        let audio = read_clip(s, &body)?;
        Ok(wav_response(&s.model.reconstruct(&audio)?))
    })
    .await
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CurveField {
    Points(Vec<f64>),
    Spec(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InterpolateRequest {
    a: String,
    b: String,
    curve: CurveField,
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed JSON body: {e}")))
}

fn clip_field(s: &ServiceState, name: &str, b64: &str) -> Result<AudioBuffer, ApiError> {
    let bytes = B64
        .decode(b64.trim())
        .map_err(|e| ApiError::bad_request(format!("field `{name}` is not base64: {e}")))?;
    read_clip(s, &bytes)
}

async fn interpolate(State(s): State<Arc<ServiceState>>, body: Bytes) -> ApiResult {
    blocking(s, move |s| {
        let req: InterpolateRequest = parse_json(&body)?;
        let a = clip_field(s, "a", &req.a)?;
        let b = clip_field(s, "b", &req.b)?;
        let curve = match req.curve {
            CurveField::Points(p) => Curve::Points(p),
            CurveField::Spec(t) => Curve::Spec(t),
        };
        let (_, audio) = s.model.interpolate_audio(&a, &b, &curve)?;
        Ok(wav_response(&audio))
    })
    .await
}

fn require_atlas(s: &ServiceState) -> Result<&DescriptorAtlas, ApiError> {
    match (&s.model, &s.atlas) {
        (Model::Discrete(_), Some(a)) => Ok(a),
        (Model::Discrete(_), None) => Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "no atlas loaded for this model",
        )),
        (Model::Continuous(_), _) => Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "atlas endpoints need a discrete model",
        )),
    }
}

fn entry_json(atlas: &DescriptorAtlas, j: usize) -> Value {
    let e = atlas.entries[j];
    json!({
        "index": j,
        "centroid_hz": e.centroid_hz,
        "bandwidth_hz": e.bandwidth_hz,
        "f0_hz": e.f0_hz,
    })
}

async fn atlas(
    State(s): State<Arc<ServiceState>>,
    Query(q): Query<std::collections::HashMap<String, String>>,
) -> ApiResult {
    let atlas = require_atlas(&s)?;
    if let Some(key) = q.keys().find(|k| *k != "descriptor") {
        return Err(ApiError::bad_request(format!("unknown query parameter `{key}`")));
    }
    let body = match q.get("descriptor") {
        Some(name) => {
            let d: Descriptor = name.parse()?;
            let order = atlas.order(d);
            json!({
                "descriptor": d.name(),
                "k": atlas.k(),
                "order": order,
                "records": order.iter().map(|&j| entry_json(atlas, j)).collect::<Vec<_>>(),
                "range": atlas.range(d),
            })
        }
        None => json!({
            "k": atlas.k(),
            "records": (0..atlas.k()).map(|j| entry_json(atlas, j)).collect::<Vec<_>>(),
            "order_centroid": atlas.order_centroid,
            "order_bandwidth": atlas.order_bandwidth,
            "order_f0": atlas.order_f0,
        }),
    };
    Ok(json_response(body.to_string()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetRequest {
    descriptor: String,
    values: Vec<f64>,
    #[serde(default)]
    gain_db: Option<Vec<f64>>,
}

async fn target(State(s): State<Arc<ServiceState>>, body: Bytes) -> ApiResult {
    blocking(s, move |s| {
        let atlas = require_atlas(s)?;
        let Model::Discrete(model) = &s.model else {
            unreachable!("require_atlas checked the model kind")
        };
        let req: TargetRequest = parse_json(&body)?;
        let d: Descriptor = req.descriptor.parse()?;
        check_frames(s, req.values.len())?;
        let (codes, audio) = synthesize_target(atlas, model, d, &req.values, req.gain_db.as_deref())?;
        Ok(json_response(
            json!({
                "descriptor": d.name(),
                "codes": codes,
                "sample_rate": audio.sample_rate,
                "wav_base64": B64.encode(encode_wav(&audio)),
            })
            .to_string(),
        ))
    })
    .await
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "no such route")
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/info", get(info))
        .route("/encode", post(encode))
        .route("/decode", post(decode))
        .route("/reconstruct", post(reconstruct))
        .route("/interpolate", post(interpolate))
        .route("/atlas", get(atlas))
        .route("/target", post(target))
        .fallback(not_found)
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

/// Binds `addr` and serves until Ctrl-C. Fails immediately if the port is taken.
pub async fn serve(state: ServiceState, addr: SocketAddr) -> crate::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!(
        "{}",
        json!({"event": "listening", "addr": listener.local_addr()?.to_string()})
    );
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
