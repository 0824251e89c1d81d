//! HTTP and WebSocket server for shared curation workspaces.
//!
//! Every endpoint lives under `/v1` and, apart from `/v1/health` and
//! `/v1/sessions`, needs a bearer token from `POST /v1/sessions`.
//! Mutations on a workspace go through one writer and are logged before
//! they are acknowledged; clients follow the log over
//! `/v1/workspaces/{w}/stream`.

mod config;
mod error;
mod routes;
mod state;
mod stream;

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;

pub use config::{Config, ConfigError};
pub use error::ApiError;
pub use routes::{router, Actor, DEFAULT_PAGE, MAX_PAGE, SEQ_HEADER};
pub use state::{AppState, CorpusHandle, Receipt, View, WorkspaceHandle};

/// A bound, not yet running server.
pub struct Server {
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
}

impl Server {
    pub async fn bind(config: Config) -> std::io::Result<Self> {
        let listener = tokio::net::TcpListener::bind(config.addr()).await?;
        Ok(Server {
            listener,
            state: AppState::new(config),
        })
    }

    pub fn with_state(listener: tokio::net::TcpListener, state: Arc<AppState>) -> Self {
        Server { listener, state }
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn state(&self) -> &Arc<AppState> {
        &self.state
    }

    /// Serves until `shutdown` resolves, then lets open requests finish.
    /// Log appends are synced before each acknowledgement, so nothing is
    /// left to flush afterwards.
    pub async fn run(self, shutdown: impl Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
        axum::serve(self.listener, router(self.state))
            .with_graceful_shutdown(shutdown)
            .await
    }
}
