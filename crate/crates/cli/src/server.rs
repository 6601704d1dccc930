//! HTTP service behind the labeling UI.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use clarify_core::data::{PreferenceTriple, Segment};
use clarify_core::envs::EnvSpec;
use clarify_core::teacher::HumanLabeler;
use clarify_core::Error;
use serde::{Deserialize, Serialize};

#[derive(Clone)]
pub struct AppState {
    pub labeler: Arc<HumanLabeler<f64>>,
    pub env: EnvSpec,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PathView {
    pub points: Vec<[f64; 2]>,
    pub start: [f64; 2],
    pub goal: [f64; 2],
    pub goal_radius: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct QueryView {
    pub ticket_id: u64,
    pub round: usize,
    pub seg0: PathView,
    pub seg1: PathView,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelRequest {
    pub ticket_id: u64,
    pub answer: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub seg0: String,
    pub seg1: String,
    pub label: String,
    pub round: usize,
}

impl HistoryEntry {
    fn of(t: &PreferenceTriple<f64>) -> Self {
        Self {
            seg0: t.seg0.id.to_string(),
            seg1: t.seg1.id.to_string(),
            label: t.label.as_str().into(),
            round: t.round,
        }
    }
}

fn path_view(env: &EnvSpec, seg: &Segment<f64>) -> PathView {
    let points = env.path_points(&seg.states);
    PathView {
        start: points[0],
        points,
        goal: env.goal_point(),
        goal_radius: env.goal_radius(),
    }
}

fn error(status: StatusCode, message: impl ToString) -> Response {
    (
        status,
        Json(serde_json::json!({ "error": message.to_string() })),
    )
        .into_response()
}

async fn status(State(app): State<AppState>) -> Response {
    Json(app.labeler.status()).into_response()
}

async fn query(State(app): State<AppState>) -> Response {
    match app.labeler.pending() {
        Some(t) => Json(QueryView {
            ticket_id: t.id,
            round: t.round,
            seg0: path_view(&app.env, &t.seg0),
            seg1: path_view(&app.env, &t.seg1),
        })
        .into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    }
}

async fn label(State(app): State<AppState>, body: Bytes) -> Response {
    let req: LabelRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };
    match app.labeler.resolve(req.ticket_id, &req.answer) {
        Ok(t) => Json(HistoryEntry::of(&t)).into_response(),
        Err(e @ Error::UnknownTicket(_)) => error(StatusCode::NOT_FOUND, e),
        Err(e @ Error::TicketClosed(_)) => error(StatusCode::CONFLICT, e),
        Err(e) => error(StatusCode::BAD_REQUEST, e),
    }
}

async fn history(State(app): State<AppState>) -> Response {
    Json(
        app.labeler
            .history()
            .iter()
            .map(HistoryEntry::of)
            .collect::<Vec<_>>(),
    )
    .into_response()
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/status", get(status))
        .route("/api/query", get(query))
        .route("/api/label", post(label))
        .route("/api/history", get(history))
        .with_state(state)
}
