//! HTTP service for live calibration and cleaning sessions.
//!
//! See `docs/api.md` for the request and response bodies.

mod api;
mod error;
pub mod live;
pub mod scripted;
pub mod store;

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

pub use api::{router, Ack, CalibrationId, CreateSession, DatasetInfo, PlanRequest, SessionInfo};
pub use error::{ErrorBody, ServiceError, ServiceResult};
pub use store::Store;

/// Binds `addr` and serves until ctrl-c.
pub async fn serve(addr: SocketAddr, data_dir: &Path) -> ServiceResult<()> {
    let store = Arc::new(Store::open(data_dir)?);
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| ServiceError::Storage(format!("cannot listen on {addr}: {e}")))?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
