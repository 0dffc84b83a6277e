//! REST and server-sent-event surface over the gateway.

use std::convert::Infallible;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use axum::extract::rejection::{JsonRejection, PathRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use futures::Stream;
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use super::gateway::{Ack, Gateway, Origin};
use super::registry::{ControlError, SliceCommand};
use super::stats::TelemetryFrame;
use crate::radio::{Direction, RbAvailability, Rnti, SliceDescriptor, SliceId};
use crate::time::parse_duration_secs;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: ErrorBody,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
                field: None,
                direction: None,
            },
        }
    }
}

impl From<ControlError> for ApiError {
    fn from(e: ControlError) -> Self {
        let status = match &e {
            ControlError::UnknownSliceId(_) | ControlError::UnknownRnti(_) => StatusCode::NOT_FOUND,
            ControlError::ShareSumExceeded { .. } | ControlError::SliceNonEmpty { .. } => StatusCode::CONFLICT,
            ControlError::DuplicateSliceId(_) | ControlError::InvalidDescriptor(_) | ControlError::SlicingDisabled => {
                StatusCode::BAD_REQUEST
            }
        };
        let mut err = ApiError::new(status, e.code(), e.to_string());
        match &e {
            ControlError::ShareSumExceeded { direction, .. } => {
                err.body.field = Some(format!("{}_share", direction.as_str()));
                err.body.direction = Some(*direction);
            }
            ControlError::DuplicateSliceId(_) | ControlError::UnknownSliceId(_) => {
                err.body.field = Some("slice_id".into());
            }
            ControlError::UnknownRnti(_) => err.body.field = Some("rnti".into()),
            _ => {}
        }
        err
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "InvalidBody", r.body_text())
    }
}

impl From<PathRejection> for ApiError {
    fn from(r: PathRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "InvalidPath", r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorResponse { error: self.body })).into_response()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioState {
    Idle,
    Running,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioStatus {
    pub state: ScenarioState,
    /// Simulated time reached, seconds.
    pub t: f64,
}

/// Start/stop hooks of a live session.
pub trait ScenarioControl: Send + Sync {
    fn start(&self) -> Result<ScenarioStatus, String>;
    fn stop(&self) -> Result<ScenarioStatus, String>;
}

#[derive(Clone)]
pub struct ApiState {
    pub gateway: Arc<Mutex<Gateway>>,
    pub frames: broadcast::Sender<TelemetryFrame>,
    pub scenario: Option<Arc<dyn ScenarioControl>>,
}

impl ApiState {
    fn gateway(&self) -> MutexGuard<'_, Gateway> {
        // A panicked holder leaves plain data behind; keep serving it.
        self.gateway.lock().unwrap_or_else(|p| p.into_inner())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AckBody {
    pub status: Ack,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelocateBody {
    pub slice_id: SliceId,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelocateAck {
    pub status: Ack,
    pub rnti: Rnti,
    pub slice_id: SliceId,
}

/// Partial update; absent fields keep their current value.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlicePatch {
    pub slice_id: Option<SliceId>,
    pub label: Option<String>,
    pub dl_share: Option<f64>,
    pub ul_share: Option<f64>,
    pub priority: Option<i32>,
    pub rb_availability: Option<RbAvailability>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct StatsQuery {
    pub window: Option<String>,
}

pub fn router(state: ApiState) -> Router {
    Router::new()
        .route("/slices", get(list_slices).post(create_slice))
        .route("/slices/{id}", patch(update_slice).delete(delete_slice))
        .route("/ues", get(list_ues))
        .route("/ues/{rnti}/slice", post(relocate))
        .route("/stats", get(stats))
        .route("/telemetry", get(telemetry))
        .route("/scenario/start", post(scenario_start))
        .route("/scenario/stop", post(scenario_stop))
        .with_state(state)
}

async fn list_slices(State(s): State<ApiState>) -> Json<Vec<SliceDescriptor>> {
    Json(s.gateway().slices())
}

async fn create_slice(
    State(s): State<ApiState>,
    body: Result<Json<SliceDescriptor>, JsonRejection>,
) -> Result<(StatusCode, Json<SliceDescriptor>), ApiError> {
    let Json(descriptor) = body?;
    s.gateway().apply_slice_command(
        Origin::Northbound,
        SliceCommand::Create {
            descriptor: descriptor.clone(),
        },
    )?;
    Ok((StatusCode::CREATED, Json(descriptor)))
}

async fn update_slice(
    State(s): State<ApiState>,
    id: Result<Path<u32>, PathRejection>,
    body: Result<Json<SlicePatch>, JsonRejection>,
) -> Result<Json<SliceDescriptor>, ApiError> {
    let Path(id) = id?;
    let Json(patch) = body?;
    let id = SliceId(id);
    if patch.slice_id.is_some_and(|b| b != id) {
        let mut e = ApiError::new(StatusCode::BAD_REQUEST, "InvalidBody", "slice_id in body differs from path");
        e.body.field = Some("slice_id".into());
        return Err(e);
    }
    let mut gw = s.gateway();
    let mut d = gw
        .registry()
        .get(id)
        .cloned()
        .ok_or(ControlError::UnknownSliceId(id))?;
    if let Some(v) = patch.label {
        d.label = v;
    }
    if let Some(v) = patch.dl_share {
        d.dl_share = v;
    }
    if let Some(v) = patch.ul_share {
        d.ul_share = v;
    }
    if let Some(v) = patch.priority {
        d.priority = v;
    }
    if let Some(v) = patch.rb_availability {
        d.rb_availability = v;
    }
    gw.apply_slice_command(Origin::Northbound, SliceCommand::Update { descriptor: d.clone() })?;
    Ok(Json(d))
}

async fn delete_slice(
    State(s): State<ApiState>,
    id: Result<Path<u32>, PathRejection>,
) -> Result<Json<AckBody>, ApiError> {
    let Path(id) = id?;
    let status = s.gateway().apply_slice_command(
        Origin::Northbound,
        SliceCommand::Delete {
            slice_id: SliceId(id),
        },
    )?;
    Ok(Json(AckBody { status }))
}

async fn list_ues(State(s): State<ApiState>) -> Json<Vec<super::gateway::UeSummary>> {
    let mut gw = s.gateway();
    gw.poll_stats();
    Json(gw.ues())
}

async fn relocate(
    State(s): State<ApiState>,
    Path(raw): Path<String>,
    body: Result<Json<RelocateBody>, JsonRejection>,
) -> Result<Json<RelocateAck>, ApiError> {
    let rnti: u16 = raw.parse().map_err(|_| {
        let mut e = ApiError::new(StatusCode::NOT_FOUND, "UnknownRnti", format!("unknown rnti {raw}"));
        e.body.field = Some("rnti".into());
        e
    })?;
    let Json(body) = body?;
    let status = s.gateway().relocate_ue(Origin::Northbound, Rnti(rnti), body.slice_id)?;
    Ok(Json(RelocateAck {
        status,
        rnti: Rnti(rnti),
        slice_id: body.slice_id,
    }))
}

async fn stats(
    State(s): State<ApiState>,
    Query(q): Query<StatsQuery>,
) -> Result<Json<super::stats::StatsReport>, ApiError> {
    let raw = q.window.as_deref().unwrap_or("1s");
    let window = parse_duration_secs(raw)
        .filter(|w| *w > 0.0 && w.is_finite())
        .ok_or_else(|| {
            let mut e = ApiError::new(StatusCode::BAD_REQUEST, "InvalidWindow", format!("cannot parse window {raw:?}"));
            e.body.field = Some("window".into());
            e
        })?;
    let mut gw = s.gateway();
    gw.poll_stats();
    let (Some(first), Some(last)) = (gw.history().front(), gw.history().back()) else {
        return Err(ApiError::new(StatusCode::NOT_FOUND, "NoStats", "no statistics reported yet"));
    };
    let covered = last.window_end - first.window_start;
    if window > covered + 1e-9 {
        let mut e = ApiError::new(
            StatusCode::BAD_REQUEST,
            "WindowOutOfRange",
            format!("window {window} s exceeds the {covered:.3} s of recorded statistics"),
        );
        e.body.field = Some("window".into());
        return Err(e);
    }
    let report = gw.stats_window(window).expect("history is non-empty");
    Ok(Json(report))
}

async fn telemetry(State(s): State<ApiState>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let rx = s.frames.subscribe();
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(frame) => {
                    let event = Event::default()
                        .event("telemetry")
                        .json_data(&frame)
                        .unwrap_or_else(|_| Event::default().comment("unserializable frame"));
                    return Some((Ok(event), rx));
                }
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    Sse::new(stream).keep_alive(KeepAlive::new().interval(Duration::from_secs(5)))
}

fn scenario_control(s: &ApiState) -> Result<Arc<dyn ScenarioControl>, ApiError> {
    s.scenario
        .clone()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "NotLive", "scenario control is only available in live mode"))
}

async fn scenario_start(State(s): State<ApiState>) -> Result<Json<ScenarioStatus>, ApiError> {
    let ctl = scenario_control(&s)?;
    ctl.start()
        .map(Json)
        .map_err(|m| ApiError::new(StatusCode::CONFLICT, "ScenarioState", m))
}

async fn scenario_stop(State(s): State<ApiState>) -> Result<Json<ScenarioStatus>, ApiError> {
    let ctl = scenario_control(&s)?;
    ctl.stop()
        .map(Json)
        .map_err(|m| ApiError::new(StatusCode::CONFLICT, "ScenarioState", m))
}
