//! The event stream: logged events in seq order, each exactly once per
//! connection, interleaved with unlogged status messages (which carry no
//! `seq`).

use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::Response;
use serde::Deserialize;
use tokio::sync::broadcast::error::RecvError;
use tokio::sync::OwnedSemaphorePermit;

use crate::error::ApiError;
use crate::routes::Actor;
use crate::state::{AppState, WorkspaceHandle};

const BATCH: usize = 256;

#[derive(Deserialize)]
pub struct StreamParams {
    #[serde(default)]
    from_seq: u64,
}

pub async fn stream(
    State(app): State<Arc<AppState>>,
    _: Actor,
    Path(w): Path<String>,
    Query(p): Query<StreamParams>,
    upgrade: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    let handle = app.workspace(&w).await?;
    let permit = app.streams.clone().try_acquire_owned().map_err(|_| {
        ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "TooManyStreams", "event stream limit reached")
    })?;
    Ok(upgrade.on_upgrade(move |socket| feed(socket, handle, p.from_seq, permit)))
}

async fn feed(mut socket: WebSocket, handle: Arc<WorkspaceHandle>, from_seq: u64, _permit: OwnedSemaphorePermit) {
    let (mut seqs, mut status) = handle.subscribe();
    let mut next = from_seq;
    loop {
        let batch = handle.events_from(next, BATCH);
        for ev in &batch {
            if socket.send(Message::Text(ev.to_json().into())).await.is_err() {
                return;
            }
            next = ev.seq + 1;
        }
        if batch.len() == BATCH {
            continue;
        }
        tokio::select! {
            changed = seqs.changed() => {
                if changed.is_err() {
                    return;
                }
            }
            msg = status.recv() => match msg {
                Ok(v) => {
                    if socket.send(Message::Text(v.to_string().into())).await.is_err() {
                        return;
                    }
                }
                Err(RecvError::Lagged(_)) => {}
                Err(RecvError::Closed) => return,
            },
            incoming = socket.recv() => match incoming {
                None | Some(Err(_)) | Some(Ok(Message::Close(_))) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}
