use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;
use tinyfit_core::InferenceEvent;

use crate::error::ApiError;
use crate::store::HistoryResponse;
use crate::{jobs, AppState};

/// Recordings of a few minutes at 100 Hz fit comfortably.
const BODY_LIMIT: usize = 16 * 1024 * 1024;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/users", post(create_user))
        .route("/api/users/{id}", get(get_user))
        .route("/api/devices", post(register_device))
        .route("/api/devices/{id}", get(get_device))
        .route("/api/devices/{id}/link", post(link_device))
        .route("/api/devices/{id}/classes", post(add_classes))
        .route("/api/devices/{id}/recordings", post(upload_recording))
        .route("/api/devices/{id}/personalize", post(start_personalization))
        .route("/api/jobs/{id}", get(get_job))
        .route("/api/devices/{id}/firmware", get(poll_firmware))
        .route("/api/devices/{id}/inferences", post(record_inferences))
        .route("/api/devices/{id}/history", get(get_history))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

/// Parses a JSON body, reporting failures in the API's error shape.
fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(str::trim)
}

fn idempotency_key(headers: &HeaderMap) -> Option<String> {
    headers
        .get("idempotency-key")
        .and_then(|v| v.to_str().ok())
        .map(str::to_owned)
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateUser {
    name: String,
}

async fn create_user(State(s): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: CreateUser = parse(&body)?;
    if req.name.trim().is_empty() {
        return Err(ApiError::bad_request("name must not be empty"));
    }
    let user = s.store.create_user(req.name)?;
    Ok((StatusCode::CREATED, Json(user)).into_response())
}

async fn get_user(State(s): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(s.store.user(&id)?).into_response())
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct RegisterDevice {
    name: String,
}

async fn register_device(State(s): State<AppState>, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    let req: RegisterDevice = if body.is_empty() {
        RegisterDevice::default()
    } else {
        parse(&body)?
    };
    let (reg, created) = s.store.register_device(req.name, idempotency_key(&headers))?;
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(reg)).into_response())
}

async fn get_device(
    State(s): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    Ok(Json(s.store.device(&id, bearer(&headers))?).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkDevice {
    user_id: String,
}

async fn link_device(
    State(s): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let req: LinkDevice = parse(&body)?;
    Ok(Json(s.store.link(&id, bearer(&headers), &req.user_id)?).into_response())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AddClasses {
    Many { names: Vec<String> },
    One { name: String },
}

async fn add_classes(
    State(s): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let names = match parse(&body)? {
        AddClasses::Many { names } => names,
        AddClasses::One { name } => vec![name],
    };
    Ok(Json(s.store.add_classes(&id, bearer(&headers), names)?).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Upload {
    class_name: String,
    rate_hz: f64,
    samples: Vec<[f64; 7]>,
}

async fn upload_recording(
    State(s): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let req: Upload = parse(&body)?;
    let store = s.store.clone();
    let token = bearer(&headers).map(str::to_owned);
    let key = idempotency_key(&headers);
    // Resampling a long upload is CPU work; keep it off the reactor.
    let receipt = tokio::task::spawn_blocking(move || {
        store.upload(&id, token.as_deref(), req.class_name, req.rate_hz, req.samples, key)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok((StatusCode::CREATED, Json(receipt)).into_response())
}

async fn start_personalization(
    State(s): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let input = s.store.queue_job(&id, bearer(&headers), s.config.examples_per_class)?;
    let job = s.store.job(&input.job_id)?;
    jobs::spawn(s.clone(), input);
    Ok((StatusCode::ACCEPTED, Json(job)).into_response())
}

async fn get_job(State(s): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(s.store.job(&id)?).into_response())
}

#[derive(Deserialize)]
struct FirmwareQuery {
    #[serde(default)]
    have_version: u32,
}

async fn poll_firmware(
    State(s): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Query(q): Query<FirmwareQuery>,
) -> Result<Response, ApiError> {
    match s.store.firmware(&id, bearer(&headers), q.have_version)? {
        None => Ok(StatusCode::NO_CONTENT.into_response()),
        Some((version, bytes)) => Ok((
            [
                (
                    header::CONTENT_TYPE,
                    HeaderValue::from_static("application/octet-stream"),
                ),
                (
                    header::HeaderName::from_static("x-bundle-version"),
                    HeaderValue::from(version),
                ),
            ],
            Bytes::copy_from_slice(&bytes),
        )
            .into_response()),
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Inferences {
    Batch { events: Vec<InferenceEvent> },
    One(InferenceEvent),
}

async fn record_inferences(
    State(s): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let events = match parse(&body)? {
        Inferences::Batch { events } => events,
        Inferences::One(e) => vec![e],
    };
    let accepted = s.store.record_inferences(&id, bearer(&headers), events)?;
    Ok((StatusCode::CREATED, Json(json!({ "accepted": accepted }))).into_response())
}

#[derive(Deserialize)]
struct HistoryQuery {
    from: Option<u64>,
    to: Option<u64>,
}

async fn get_history(
    State(s): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Query(q): Query<HistoryQuery>,
) -> Result<Response, ApiError> {
    let events = s.store.history(&id, bearer(&headers), q.from, q.to)?;
    Ok(Json(HistoryResponse { device_id: id, events }).into_response())
}
