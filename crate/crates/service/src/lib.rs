//! HTTP front end for live planning sessions.
//!
//! Routes (JSON unless noted):
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/health` | status and version |
//! | GET, POST | `/scenarios` | list ids, create |
//! | GET | `/scenarios/{id}` | |
//! | POST | `/scenarios/{id}/fit-env` | CSV samples in, fitted model out |
//! | POST | `/scenarios/{id}/pareto` | `{durations, scalings}`, `?format=csv` |
//! | GET | `/scenarios/{id}/field-grid?nx=&ny=` | field vectors over the corridor box |
//! | GET, POST | `/sessions` | list ids, create and plan |
//! | GET | `/sessions/{id}` | session with history |
//! | POST | `/sessions/{id}/state` | `{t, state}` in, plan out |
//! | GET | `/sessions/{id}/plan` | active plan |
//! | GET | `/sessions/{id}/nudge?now=` | |
//! | GET | `/sessions/{id}/events` | server-sent `plan-updated`, `plan-failed`, `nudge`, `solver-iteration` |

use std::net::SocketAddr;

mod app;
mod error;
pub mod store;

pub use app::{router, AppState, ServiceConfig, SessionEvent, COALESCED_HEADER, FIELD_GRID_SCHEMA_VERSION};
pub use error::ApiError;

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot open data directory: {0}")]
    Store(std::io::Error),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("server stopped: {0}")]
    Io(std::io::Error),
}

/// Binds `addr` and serves until the process ends.
pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> Result<(), ServeError> {
    let state = AppState::new(config).map_err(ServeError::Store)?;
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|source| ServeError::Bind { addr, source })?;
    log::info!("listening on {}", listener.local_addr().map_err(ServeError::Io)?);
    axum::serve(listener, router(state)).await.map_err(ServeError::Io)
}
