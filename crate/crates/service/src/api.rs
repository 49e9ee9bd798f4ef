use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::header;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use vnorm_core::calibration::CalibrationResult;
use vnorm_core::costmodel::GlobalParams;
use vnorm_core::io::partition_csv;
use vnorm_core::pipeline::PlanChoice;
use vnorm_core::planner::{rank, PlanReport};
use vnorm_core::procedures::Timing;
use vnorm_core::similarity::SimilarityConfig;
use vnorm_core::Execution;

use crate::error::{ServiceError, ServiceResult};
use crate::live::{Applied, Mode, ModelParams, SessionResult, SessionSpec, SlotStatus, Stage, Submission};
use crate::store::{DatasetRecord, Store};

pub type AppState = Arc<Store>;

/// Runs blocking store work off the async executor.
async fn blocking<T, F>(f: F) -> ServiceResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> ServiceResult<T> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Storage(format!("worker failed: {e}")))?
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub dataset: String,
    pub values: usize,
    pub has_gold: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub dataset: String,
    pub mode: Option<Mode>,
    /// User slots; cwinston only.
    pub users: Option<usize>,
    pub timing: Option<Timing>,
    pub plan: Option<PlanChoice>,
    pub params: Option<ModelParams>,
    /// Id of a stored calibration or a finished calibrate session.
    pub calibration: Option<String>,
    pub calibration_seed: Option<u64>,
    pub global: Option<GlobalParams>,
    pub similarity: Option<SimilarityConfig>,
    pub caps: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session: String,
    pub dataset: String,
    pub mode: Mode,
    pub users: usize,
    pub stage: Stage,
    pub done: bool,
    pub actions: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub seq: u64,
    pub applied: Applied,
    pub next: SlotStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanRequest {
    pub dataset: String,
    pub params: Option<ModelParams>,
    pub calibration: Option<String>,
    pub global: Option<GlobalParams>,
    pub similarity: Option<SimilarityConfig>,
    pub caps: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationId {
    pub calibration: String,
}

pub fn router(store: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/datasets", post(upload_dataset))
        .route("/datasets/{id}", get(get_dataset))
        .route("/plan", post(plan))
        .route("/calibrations", post(import_calibration))
        .route("/calibrations/{id}", get(get_calibration))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/slots/{slot}/task", get(next_task))
        .route("/sessions/{id}/slots/{slot}/actions", post(submit))
        .route("/sessions/{id}/result", get(result))
        .route("/sessions/{id}/result.csv", get(result_csv))
        .route("/sessions/{id}/calibration", get(export_calibration))
        .with_state(store)
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn upload_dataset(State(store): State<AppState>, Json(record): Json<DatasetRecord>) -> ServiceResult<Json<DatasetInfo>> {
    blocking(move || {
        let d = store.put_dataset(record)?;
        Ok(Json(DatasetInfo {
            dataset: d.id.clone(),
            values: d.table.len(),
            has_gold: d.gold.is_some(),
        }))
    })
    .await
}

async fn get_dataset(State(store): State<AppState>, Path(id): Path<String>) -> ServiceResult<Json<DatasetInfo>> {
    blocking(move || {
        let d = store.dataset(&id)?;
        Ok(Json(DatasetInfo {
            dataset: d.id.clone(),
            values: d.table.len(),
            has_gold: d.gold.is_some(),
        }))
    })
    .await
}

fn resolve_params(store: &Store, params: Option<ModelParams>, calibration: Option<&str>) -> ServiceResult<Option<ModelParams>> {
    match (params, calibration) {
        (Some(_), Some(_)) => Err(ServiceError::BadRequest("give params or calibration, not both".into())),
        (Some(p), None) => Ok(Some(p)),
        (None, Some(id)) => Ok(Some(ModelParams::from(&store.calibration(id)?))),
        (None, None) => Ok(None),
    }
}

async fn plan(State(store): State<AppState>, Json(req): Json<PlanRequest>) -> ServiceResult<Json<PlanReport>> {
    blocking(move || {
        let params =
            resolve_params(&store, req.params, req.calibration.as_deref())?.ok_or(ServiceError::MissingCalibration)?;
        let global = req.global.unwrap_or_default();
        global.validate()?;
        params.user.validate()?;
        let similarity = req.similarity.unwrap_or_default();
        let prepared = store.prepared(&req.dataset, &similarity, req.caps.as_deref(), 0)?;
        Ok(Json(rank(&prepared.joint, &params.purity, &params.user, &global, Execution::Parallel)?))
    })
    .await
}

async fn import_calibration(
    State(store): State<AppState>,
    Json(result): Json<CalibrationResult>,
) -> ServiceResult<Json<CalibrationId>> {
    blocking(move || {
        result.user_params.validate()?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        store.put_calibration(&id, &result)?;
        Ok(Json(CalibrationId { calibration: id }))
    })
    .await
}

async fn get_calibration(State(store): State<AppState>, Path(id): Path<String>) -> ServiceResult<Json<CalibrationResult>> {
    blocking(move || Ok(Json(store.calibration(&id)?))).await
}

async fn create_session(State(store): State<AppState>, Json(req): Json<CreateSession>) -> ServiceResult<Json<SessionInfo>> {
    blocking(move || {
        let mode = req.mode.unwrap_or(Mode::Clean);
        let users = req.users.unwrap_or(1);
        if mode == Mode::Cwinston && users == 0 {
            return Err(ServiceError::BadRequest("users must be >= 1".into()));
        }
        let params = resolve_params(&store, req.params, req.calibration.as_deref())?;
        let spec = SessionSpec {
            dataset: req.dataset,
            mode,
            users,
            timing: req.timing.unwrap_or(Timing::Observed),
            plan: req.plan.unwrap_or(PlanChoice::Auto),
            params,
            calibration_seed: req.calibration_seed.unwrap_or(0),
            global: req.global.unwrap_or_default(),
            similarity: req.similarity.unwrap_or_default(),
            caps: req.caps,
        };
        let id = store.create_session(spec)?;
        info(&store, &id)
    })
    .await
}

fn info(store: &Store, id: &str) -> ServiceResult<Json<SessionInfo>> {
    let entry = store.session(id)?;
    let entry = entry.lock().unwrap_or_else(|e| e.into_inner());
    let spec = entry.live.spec();
    Ok(Json(SessionInfo {
        session: entry.id.clone(),
        dataset: spec.dataset.clone(),
        mode: spec.mode,
        users: spec.users,
        stage: entry.live.stage(),
        done: entry.live.is_done(),
        actions: entry.live.applied(),
    }))
}

async fn get_session(State(store): State<AppState>, Path(id): Path<String>) -> ServiceResult<Json<SessionInfo>> {
    blocking(move || info(&store, &id)).await
}

async fn next_task(
    State(store): State<AppState>,
    Path((id, slot)): Path<(String, usize)>,
) -> ServiceResult<Json<SlotStatus>> {
    blocking(move || {
        let entry = store.session(&id)?;
        let entry = entry.lock().unwrap_or_else(|e| e.into_inner());
        Ok(Json(entry.live.status(slot)?))
    })
    .await
}

async fn submit(
    State(store): State<AppState>,
    Path((id, slot)): Path<(String, usize)>,
    Json(submission): Json<Submission>,
) -> ServiceResult<Json<Ack>> {
    blocking(move || {
        let applied = store.submit(&id, slot, submission)?;
        let entry = store.session(&id)?;
        let entry = entry.lock().unwrap_or_else(|e| e.into_inner());
        Ok(Json(Ack {
            seq: entry.live.applied(),
            applied,
            next: entry.live.status(slot)?,
        }))
    })
    .await
}

fn session_result(store: &Store, id: &str) -> ServiceResult<(SessionResult, Option<String>)> {
    let entry = store.session(id)?;
    let entry = entry.lock().unwrap_or_else(|e| e.into_inner());
    let dataset = store.dataset(&entry.live.spec().dataset)?;
    let result = entry.live.result(dataset.gold.as_ref())?;
    let csv = match &result.partition {
        Some(p) => Some(partition_csv(entry.live.table(), p)?),
        None => None,
    };
    Ok((result, csv))
}

async fn result(State(store): State<AppState>, Path(id): Path<String>) -> ServiceResult<Json<SessionResult>> {
    blocking(move || Ok(Json(session_result(&store, &id)?.0))).await
}

async fn result_csv(State(store): State<AppState>, Path(id): Path<String>) -> ServiceResult<impl IntoResponse> {
    blocking(move || {
        let csv = session_result(&store, &id)?
            .1
            .ok_or_else(|| ServiceError::BadRequest("calibrate sessions have no partition".into()))?;
        Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv))
    })
    .await
}

async fn export_calibration(State(store): State<AppState>, Path(id): Path<String>) -> ServiceResult<Json<CalibrationResult>> {
    blocking(move || {
        let entry = store.session(&id)?;
        let entry = entry.lock().unwrap_or_else(|e| e.into_inner());
        Ok(Json(entry.live.calibration()?))
    })
    .await
}
