//! HTTP JSON API. Operators (one configured bearer token) create campaigns,
//! register evaluators and read tallies; evaluators (tokens issued by the
//! operator) fetch tasks and submit judgments.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::campaign::{create_campaign, Campaign};
use crate::error::{EvalError, Result};
use crate::import::{build_spec, CampaignRequest};
use crate::store::{Ack, AssignedCampaign, CampaignSummary, Evaluator, NextTask, Store};
use crate::tally::{Choice, JudgmentRecord, PreferenceTally};

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub operator_token: Arc<str>,
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

impl IntoResponse for EvalError {
    fn into_response(self) -> Response {
        let status = match &self {
            EvalError::NotFound(_) => StatusCode::NOT_FOUND,
            EvalError::Validation(_) | EvalError::Coverage { .. } | EvalError::Core(_) => StatusCode::BAD_REQUEST,
            EvalError::Unauthorized => StatusCode::UNAUTHORIZED,
            EvalError::Forbidden(_) => StatusCode::FORBIDDEN,
            EvalError::Conflict(_) => StatusCode::CONFLICT,
            EvalError::Storage { .. } => StatusCode::SERVICE_UNAVAILABLE,
            EvalError::Corrupt { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let mut response = (status, Json(ErrorBody { error: self.to_string() })).into_response();
        if status == StatusCode::UNAUTHORIZED {
            response
                .headers_mut()
                .insert(header::WWW_AUTHENTICATE, "Bearer".parse().expect("static header"));
        }
        response
    }
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(str::trim)
}

fn require_operator(state: &AppState, headers: &HeaderMap) -> Result<()> {
    match bearer(headers) {
        Some(t) if t == &*state.operator_token => Ok(()),
        Some(t) if state.store.evaluator_for(t).is_some() => {
            Err(EvalError::Forbidden("operator access required".into()))
        }
        _ => Err(EvalError::Unauthorized),
    }
}

fn require_evaluator(state: &AppState, headers: &HeaderMap) -> Result<String> {
    match bearer(headers) {
        Some(t) if t == &*state.operator_token => {
            Err(EvalError::Forbidden("the operator token cannot judge".into()))
        }
        Some(t) => state.store.evaluator_for(t).ok_or(EvalError::Unauthorized),
        None => Err(EvalError::Unauthorized),
    }
}

fn body<T>(payload: std::result::Result<Json<T>, JsonRejection>) -> Result<T> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| EvalError::Validation(e.body_text()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> Result<T> {
    tokio::task::spawn_blocking(f)
        .await
        .unwrap_or_else(|e| Err(EvalError::storage(std::path::Path::new("<worker>"), std::io::Error::other(e))))
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn create(
    State(state): State<AppState>,
    headers: HeaderMap,
    payload: std::result::Result<Json<CampaignRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<CampaignSummary>)> {
    require_operator(&state, &headers)?;
    let request = body(payload)?;
    let store = state.store.clone();
    let campaign = blocking(move || {
        let campaign = create_campaign(&build_spec(&request)?)?;
        store.add_campaign(campaign)
    })
    .await?;
    Ok((
        StatusCode::CREATED,
        Json(CampaignSummary {
            id: campaign.id.clone(),
            comparison: campaign.comparison.clone(),
            language: campaign.language.clone(),
            size: campaign.size(),
            judgments: state.store.current_judgments(&campaign.id)?.len(),
        }),
    ))
}

async fn list(State(state): State<AppState>, headers: HeaderMap) -> Result<Json<Vec<CampaignSummary>>> {
    require_operator(&state, &headers)?;
    Ok(Json(state.store.campaigns()))
}

async fn show(State(state): State<AppState>, headers: HeaderMap, Path(id): Path<String>) -> Result<Json<Campaign>> {
    require_operator(&state, &headers)?;
    Ok(Json((*state.store.campaign(&id)?).clone()))
}

async fn tally(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> Result<Json<PreferenceTally>> {
    require_operator(&state, &headers)?;
    Ok(Json(state.store.tally(&id)?))
}

async fn audit(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> Result<Json<Vec<JudgmentRecord>>> {
    require_operator(&state, &headers)?;
    Ok(Json(state.store.audit_log(&id)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewEvaluator {
    name: String,
    token: Option<String>,
}

async fn register(
    State(state): State<AppState>,
    headers: HeaderMap,
    payload: std::result::Result<Json<NewEvaluator>, JsonRejection>,
) -> Result<(StatusCode, Json<Evaluator>)> {
    require_operator(&state, &headers)?;
    let request = body(payload)?;
    let store = state.store.clone();
    let evaluator = blocking(move || store.register_evaluator(&request.name, request.token)).await?;
    Ok((StatusCode::CREATED, Json(evaluator)))
}

async fn assigned(State(state): State<AppState>, headers: HeaderMap) -> Result<Json<Vec<AssignedCampaign>>> {
    let evaluator = require_evaluator(&state, &headers)?;
    Ok(Json(state.store.assigned(&evaluator)))
}

async fn next(State(state): State<AppState>, headers: HeaderMap, Path(id): Path<String>) -> Result<Json<NextTask>> {
    let evaluator = require_evaluator(&state, &headers)?;
    Ok(Json(state.store.next_task(&id, &evaluator)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Submission {
    item: usize,
    choice: String,
}

async fn submit(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
    payload: std::result::Result<Json<Submission>, JsonRejection>,
) -> Result<Json<Ack>> {
    let evaluator = require_evaluator(&state, &headers)?;
    let submission = body(payload)?;
    let choice: Choice = submission.choice.parse()?;
    let store = state.store.clone();
    let ack = blocking(move || store.submit(&id, submission.item, choice, &evaluator)).await?;
    Ok(Json(ack))
}

/// The API under `/api`, plus the judging UI served from `ui_dir` if given.
pub fn router(state: AppState, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/campaigns", post(create).get(list))
        .route("/campaigns/{id}", get(show))
        .route("/campaigns/{id}/tally", get(tally))
        .route("/campaigns/{id}/judgments", get(audit).post(submit))
        .route("/campaigns/{id}/next", get(next))
        .route("/evaluators", post(register))
        .route("/assigned", get(assigned));
    let app = Router::new().nest("/api", api).with_state(state);
    match ui_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

pub struct ServeOptions {
    pub addr: SocketAddr,
    pub store_dir: PathBuf,
    pub operator_token: String,
    pub ui_dir: Option<PathBuf>,
}

/// Runs the service until interrupted. `on_bound` receives the bound
/// address once the listener is up.
pub fn serve_blocking(options: ServeOptions, on_bound: impl FnOnce(SocketAddr)) -> Result<()> {
    if options.operator_token.len() < 8 {
        return Err(EvalError::Validation("operator token needs at least 8 characters".into()));
    }
    let store = Store::open(&options.store_dir, Arc::new(itref_core::gateway::SystemClock))?;
    let state = AppState {
        store: Arc::new(store),
        operator_token: options.operator_token.into(),
    };
    let app = router(state, options.ui_dir);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| EvalError::storage(&options.store_dir, e))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(options.addr)
            .await
            .map_err(|e| EvalError::Validation(format!("cannot bind {}: {e}", options.addr)))?;
        on_bound(listener.local_addr().map_err(|e| EvalError::Validation(e.to_string()))?);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| EvalError::Validation(format!("server stopped: {e}")))
    })
}
