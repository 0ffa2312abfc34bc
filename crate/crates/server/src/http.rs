//! HTTP gateway: queue snapshots, chair commands, the event stream and the
//! web participant endpoints.

use std::convert::Infallible;
use std::path::PathBuf;
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use floorctl_core::FloorId;
use futures::stream::{self, Stream, StreamExt};
use serde::Deserialize;
use tokio::sync::broadcast;
use tokio_util::sync::CancellationToken;
use tower_http::services::ServeDir;

use crate::conference::{ApiError, ApiStatus, ChairCommand, ConferenceHandle, Role, StreamEvent, WebAction};

pub const SSE_KEEPALIVE: Duration = Duration::from_secs(15);

#[derive(Clone)]
struct AppState {
    conference: ConferenceHandle,
    chair_token: String,
    keepalive: Duration,
    shutdown: CancellationToken,
}

#[derive(Debug, Clone)]
pub struct HttpOptions {
    pub chair_token: String,
    pub static_dir: Option<PathBuf>,
    pub keepalive: Duration,
    /// Ends open event streams so a graceful shutdown can finish.
    pub shutdown: CancellationToken,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self.status {
            ApiStatus::BadRequest => StatusCode::BAD_REQUEST,
            ApiStatus::Unauthorized => StatusCode::UNAUTHORIZED,
            ApiStatus::NotFound => StatusCode::NOT_FOUND,
            ApiStatus::Conflict => StatusCode::CONFLICT,
            ApiStatus::Unavailable => StatusCode::SERVICE_UNAVAILABLE,
        };
        (status, Json(self)).into_response()
    }
}

pub fn router(conference: ConferenceHandle, options: HttpOptions) -> Router {
    let state = AppState {
        conference,
        chair_token: options.chair_token,
        keepalive: options.keepalive,
        shutdown: options.shutdown,
    };
    let api = Router::new()
        .route("/api/conf/{id}/floors", get(list_floors))
        .route("/api/conf/{id}/floors/{fid}/queue", get(get_queue))
        .route("/api/conf/{id}/chair/command", post(chair_command))
        .route("/api/conf/{id}/events", get(events))
        .route("/api/conf/{id}/participants", post(join))
        .route("/api/conf/{id}/floor-action", post(floor_action))
        .with_state(state);
    match options.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

fn check_conference(state: &AppState, id: u32) -> Result<(), ApiError> {
    if id == state.conference.conference_id() {
        Ok(())
    } else {
        Err(ApiError::new(ApiStatus::NotFound, "UnknownConference", format!("no conference {id}")))
    }
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers.get(header::AUTHORIZATION)?.to_str().ok()?.strip_prefix("Bearer ").map(str::trim)
}

fn unauthorized() -> ApiError {
    ApiError::new(ApiStatus::Unauthorized, "Unauthorized", "missing or invalid bearer token")
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload.map(|Json(v)| v).map_err(|e| ApiError::new(ApiStatus::BadRequest, "BadRequest", e.body_text()))
}

async fn list_floors(State(state): State<AppState>, Path(id): Path<u32>) -> Result<Response, ApiError> {
    check_conference(&state, id)?;
    Ok(Json(state.conference.floors().await?).into_response())
}

async fn get_queue(State(state): State<AppState>, Path((id, fid)): Path<(u32, u16)>) -> Result<Response, ApiError> {
    check_conference(&state, id)?;
    let snapshot = state.conference.snapshot(FloorId(fid)).await?;
    Ok(Json(snapshot.entries).into_response())
}

async fn chair_command(
    State(state): State<AppState>,
    Path(id): Path<u32>,
    headers: HeaderMap,
    payload: Result<Json<ChairCommand>, JsonRejection>,
) -> Result<Response, ApiError> {
    check_conference(&state, id)?;
    if bearer(&headers) != Some(state.chair_token.as_str()) {
        return Err(unauthorized());
    }
    let cmd = body(payload)?;
    Ok(Json(state.conference.chair(cmd).await?).into_response())
}

#[derive(Debug, Deserialize)]
struct JoinBody {
    display_name: String,
}

async fn join(
    State(state): State<AppState>,
    Path(id): Path<u32>,
    payload: Result<Json<JoinBody>, JsonRejection>,
) -> Result<Response, ApiError> {
    check_conference(&state, id)?;
    let JoinBody { display_name } = body(payload)?;
    let display_name = display_name.trim().to_owned();
    if display_name.is_empty() {
        return Err(ApiError::new(ApiStatus::BadRequest, "BadRequest", "display_name is empty"));
    }
    let who = state.conference.join(display_name).await?;
    Ok((StatusCode::CREATED, Json(who)).into_response())
}

async fn floor_action(
    State(state): State<AppState>,
    Path(id): Path<u32>,
    headers: HeaderMap,
    payload: Result<Json<WebAction>, JsonRejection>,
) -> Result<Response, ApiError> {
    check_conference(&state, id)?;
    let token = bearer(&headers).ok_or_else(unauthorized)?.to_owned();
    let action = body(payload)?;
    Ok(Json(state.conference.web_action(&token, action).await?).into_response())
}

#[derive(Debug, Deserialize)]
struct StreamQuery {
    /// Browsers cannot set headers on an event source; they pass the token here.
    token: Option<String>,
}

async fn events(
    State(state): State<AppState>,
    Path(id): Path<u32>,
    Query(query): Query<StreamQuery>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    check_conference(&state, id)?;
    let token = bearer(&headers).map(str::to_owned).or(query.token).ok_or_else(unauthorized)?;
    let role = if token == state.chair_token { Some(Role::Chair) } else { state.conference.authorize(&token).await };
    if role.is_none() {
        return Err(unauthorized());
    }
    let last_event_id =
        headers.get("last-event-id").and_then(|v| v.to_str().ok()).and_then(|v| v.trim().parse::<u64>().ok());
    let sub = state.conference.subscribe(last_event_id).await?;
    let stream = event_stream(sub.backlog, sub.live).take_until(state.shutdown.cancelled_owned());
    Ok(Sse::new(stream).keep_alive(KeepAlive::new().interval(state.keepalive).text("keepalive")).into_response())
}

fn to_sse(e: StreamEvent) -> Event {
    Event::default().id(e.seq.to_string()).event(e.name).data(e.data)
}

/// Backlog first, then live events. A subscriber that falls too far behind
/// loses its stream and is expected to reconnect with Last-Event-ID.
fn event_stream(
    backlog: Vec<StreamEvent>,
    live: broadcast::Receiver<StreamEvent>,
) -> impl Stream<Item = Result<Event, Infallible>> {
    let live = stream::unfold(live, |mut rx| async move {
        match rx.recv().await {
            Ok(e) => Some((to_sse(e), rx)),
            Err(broadcast::error::RecvError::Lagged(n)) => {
                tracing::info!(missed = n, "event stream subscriber lagged, closing");
                None
            }
            Err(broadcast::error::RecvError::Closed) => None,
        }
    });
    stream::iter(backlog.into_iter().map(to_sse)).chain(live).map(Ok)
}
