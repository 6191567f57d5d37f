//! HTTP session API over the refinement pipeline.
//!
//! Control messages are JSON; arrays travel as framed UGSTACK buffers
//! (`application/x-ugstack`), several frames back to back where a response
//! carries more than one array.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::DefaultBodyLimit;
use axum::routing::{get, post};
use axum::Router;

pub mod bundle;
mod error;
mod routes;
mod store;

pub use error::ApiError;
pub use store::{ServiceConfig, SharedSession, Store};

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        Self {
            store: Arc::new(Store::new(config)),
        }
    }
}

pub fn router(state: AppState) -> Router {
    let limit = state.store.config().max_upload_bytes;
    Router::new()
        .route("/sessions", post(routes::create_session))
        .route("/sessions/{id}", get(routes::get_session))
        .route("/sessions/{id}/slices/{k}", get(routes::get_slice))
        .route("/sessions/{id}/slices/{k}/scribbles", post(routes::submit_scribbles))
        .route("/sessions/{id}/advance", post(routes::advance))
        .route("/sessions/{id}/export", get(routes::export))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

/// Serve on `addr` until the process is stopped, evicting idle sessions in
/// the background.
pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    let state = AppState::new(config);
    if let Some(timeout) = state.store.config().idle_timeout {
        let store = state.store.clone();
        let period = (timeout / 4).max(Duration::from_secs(1));
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(period);
            loop {
                tick.tick().await;
                let n = store.evict_idle();
                if n > 0 {
                    tracing::info!(evicted = n, "dropped idle sessions");
                }
            }
        });
    }
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state)).await
}
