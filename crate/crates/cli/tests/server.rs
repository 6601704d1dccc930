use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use clarify_cli::server::{router, AppState, HistoryEntry, QueryView};
use clarify_core::data::{Segment, SegmentId};
use clarify_core::envs::{EnvSpec, GridNavEnv};
use clarify_core::teacher::HumanLabeler;
use http_body_util::BodyExt;
use tower::ServiceExt;

fn segment(env: &GridNavEnv, id: usize, cells: &[usize]) -> Arc<Segment<f64>> {
    let states = cells.iter().map(|&c| env.encode_cell(c)).collect();
    Arc::new(
        Segment::new(
            SegmentId::new(id, 0),
            states,
            vec![vec![1.0, 0.0, 0.0, 0.0]; cells.len()],
            vec![0.0; cells.len()],
        )
        .unwrap(),
    )
}

fn app() -> (AppState, GridNavEnv) {
    let env = GridNavEnv::default();
    let state = AppState {
        labeler: Arc::new(HumanLabeler::new("exp-1", 3)),
        env: EnvSpec::Gridnav(env.clone()),
    };
    (state, env)
}

async fn call(
    state: &AppState,
    method: &str,
    uri: &str,
    body: Option<String>,
) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json");
    let req = req
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    (
        status,
        resp.into_body()
            .collect()
            .await
            .unwrap()
            .to_bytes()
            .to_vec(),
    )
}

fn label_body(ticket: u64, answer: &str) -> Option<String> {
    Some(serde_json::json!({ "ticket_id": ticket, "answer": answer }).to_string())
}

#[tokio::test]
async fn status_reports_progress() {
    let (state, _) = app();
    let (code, body) = call(&state, "GET", "/api/status", None).await;
    assert_eq!(code, StatusCode::OK);
    let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(
        v,
        serde_json::json!({ "round": 0, "labels_done": 0, "labels_needed": 3, "experiment_id": "exp-1" })
    );
}

#[tokio::test]
async fn query_is_idempotent_and_renders_paths() {
    let (state, env) = app();
    assert_eq!(
        call(&state, "GET", "/api/query", None).await.0,
        StatusCode::NO_CONTENT
    );
    let id = state
        .labeler
        .request(segment(&env, 0, &[0, 1, 2]), segment(&env, 1, &[8, 16]), 0);
    let (code, a) = call(&state, "GET", "/api/query", None).await;
    assert_eq!(code, StatusCode::OK);
    let (_, b) = call(&state, "GET", "/api/query", None).await;
    let (qa, qb): (QueryView, QueryView) = (
        serde_json::from_slice(&a).unwrap(),
        serde_json::from_slice(&b).unwrap(),
    );
    assert_eq!(qa.ticket_id, id);
    assert_eq!(qb.ticket_id, id);
    assert_eq!(qa.seg0.points, vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]);
    assert_eq!(qa.seg1.start, [0.0, 1.0]);
    assert_eq!(qa.seg0.goal, [7.0, 7.0]);
}

#[tokio::test]
async fn labels_map_and_errors_use_status_codes() {
    let (state, env) = app();
    let skip = state
        .labeler
        .request(segment(&env, 0, &[0]), segment(&env, 1, &[1]), 0);
    let first = state
        .labeler
        .request(segment(&env, 2, &[2]), segment(&env, 3, &[3]), 0);

    let (code, _) = call(&state, "POST", "/api/label", label_body(skip, "skip")).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(state.labeler.status().labels_done, 1);
    assert_eq!(
        call(&state, "POST", "/api/label", label_body(skip, "first"))
            .await
            .0,
        StatusCode::CONFLICT
    );
    assert_eq!(
        call(&state, "POST", "/api/label", label_body(999, "first"))
            .await
            .0,
        StatusCode::NOT_FOUND
    );
    assert_eq!(
        call(&state, "POST", "/api/label", label_body(first, "maybe"))
            .await
            .0,
        StatusCode::BAD_REQUEST
    );
    assert_eq!(
        call(&state, "POST", "/api/label", Some("{not json".into()))
            .await
            .0,
        StatusCode::BAD_REQUEST
    );
    assert_eq!(
        call(&state, "POST", "/api/label", label_body(first, "first"))
            .await
            .0,
        StatusCode::OK
    );

    let (code, body) = call(&state, "GET", "/api/history", None).await;
    assert_eq!(code, StatusCode::OK);
    let h: Vec<HistoryEntry> = serde_json::from_slice(&body).unwrap();
    let labels: Vec<&str> = h.iter().map(|e| e.label.as_str()).collect();
    assert_eq!(labels, ["skip", "first"]);
    assert_eq!(h[0].seg0, SegmentId::new(0, 0).to_string());
    assert_eq!(
        call(&state, "GET", "/api/query", None).await.0,
        StatusCode::NO_CONTENT
    );
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_labels_resolve_once() {
    let (state, env) = app();
    let id = state
        .labeler
        .request(segment(&env, 0, &[0]), segment(&env, 1, &[1]), 0);
    let tasks: Vec<_> = (0..8)
        .map(|i| {
            let state = state.clone();
            tokio::spawn(async move {
                let answer = if i % 2 == 0 { "first" } else { "second" };
                call(&state, "POST", "/api/label", label_body(id, answer))
                    .await
                    .0
            })
        })
        .collect();
    let mut codes = Vec::new();
    for t in tasks {
        codes.push(t.await.unwrap());
    }
    assert_eq!(codes.iter().filter(|&&c| c == StatusCode::OK).count(), 1);
    assert_eq!(
        codes.iter().filter(|&&c| c == StatusCode::CONFLICT).count(),
        7
    );
    assert_eq!(state.labeler.history().len(), 1);
}
