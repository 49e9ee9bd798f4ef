use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use vnorm_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("unknown dataset {0}")]
    UnknownDataset(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("unknown calibration {0}")]
    UnknownCalibration(String),
    #[error("plan auto needs a calibration id or explicit params")]
    MissingCalibration,
    #[error("the session is not done yet")]
    SessionNotDone,
    #[error("slot {0} is waiting for the other users")]
    SlotBlocked(usize),
    #[error("no slot {slot}; the session has {users}")]
    InvalidSlot { slot: usize, users: usize },
    #[error("{0}")]
    BadRequest(String),
    #[error("storage: {0}")]
    Storage(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type ServiceResult<T> = std::result::Result<T, ServiceError>;

impl From<std::io::Error> for ServiceError {
    fn from(e: std::io::Error) -> Self {
        ServiceError::Storage(e.to_string())
    }
}

impl From<serde_json::Error> for ServiceError {
    fn from(e: serde_json::Error) -> Self {
        ServiceError::Storage(e.to_string())
    }
}

/// JSON error body.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownDataset(_) => "unknown_dataset",
            ServiceError::UnknownSession(_) => "unknown_session",
            ServiceError::UnknownCalibration(_) => "unknown_calibration",
            ServiceError::MissingCalibration => "missing_calibration",
            ServiceError::SessionNotDone => "session_not_done",
            ServiceError::SlotBlocked(_) => "slot_blocked",
            ServiceError::InvalidSlot { .. } => "invalid_slot",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::Storage(_) => "storage",
            ServiceError::Core(e) => match e {
                CoreError::StaleTask { .. } => "stale_task",
                CoreError::ActionMismatch(_) => "action_mismatch",
                CoreError::BoxConflict(_) => "box_conflict",
                CoreError::LinkOutOfWindow { .. } => "link_out_of_window",
                CoreError::ConflictingEvidence(..) => "conflicting_evidence",
                CoreError::SessionDone => "session_done",
                CoreError::IncompleteSession => "session_not_done",
                CoreError::GoldCoverage(_) => "gold_coverage",
                CoreError::Io(_) => "storage",
                _ => "validation",
            },
        }
    }

    pub fn status(&self) -> StatusCode {
        match self.code() {
            "unknown_dataset" | "unknown_session" | "unknown_calibration" => StatusCode::NOT_FOUND,
            "stale_task" | "session_done" | "session_not_done" | "slot_blocked" => StatusCode::CONFLICT,
            "action_mismatch" | "box_conflict" | "link_out_of_window" | "conflicting_evidence" => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            "storage" => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            log::error!("{self}");
        }
        let body = ErrorBody {
            error: self.code().to_string(),
            message: self.to_string(),
        };
        (status, Json(body)).into_response()
    }
}
