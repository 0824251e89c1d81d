use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{FromRequestParts, Path, Query, State};
use axum::http::request::Parts;
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use curate_core::corpus::{ExportFormat, FieldMap, InputFormat};
use curate_core::graph::NodeOutput;
use curate_core::workspace::Command;
use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::error::ApiError;
use crate::state::AppState;
use crate::stream;

type App = State<Arc<AppState>>;

/// The actor behind a bearer token, from the `Authorization` header or a
/// `token` query parameter (browsers cannot set headers on a WebSocket).
pub struct Actor(pub String);

fn query_token(parts: &Parts) -> Option<String> {
    parts
        .uri
        .query()?
        .split('&')
        .find_map(|kv| kv.strip_prefix("token="))
        .map(str::to_owned)
}

impl FromRequestParts<Arc<AppState>> for Actor {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &Arc<AppState>) -> Result<Self, ApiError> {
        let token = parts
            .headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(str::to_owned)
            .or_else(|| query_token(parts))
            .ok_or_else(ApiError::unauthorized)?;
        state.actor(token.trim()).map(Actor).ok_or_else(ApiError::unauthorized)
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::malformed(e.to_string()))
}

pub fn router(state: Arc<AppState>) -> Router {
    let limit = tower::limit::GlobalConcurrencyLimitLayer::new(state.config.max_requests.max(1));
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/sessions", post(open_session))
        .route("/v1/corpora", get(list_corpora).post(create_corpus))
        .route("/v1/corpora/{c}", get(corpus_info))
        .route("/v1/corpora/{c}/ingest", post(ingest))
        .route("/v1/documents/{id}", get(document))
        .route("/v1/workspaces", get(list_workspaces).post(create_workspace))
        .route("/v1/workspaces/{w}/snapshot", get(snapshot))
        .route("/v1/workspaces/{w}/commands", post(command))
        .route("/v1/workspaces/{w}/log", get(log))
        .route("/v1/workspaces/{w}/stream", get(stream::stream))
        .route("/v1/workspaces/{w}/nodes/{n}/output", get(output))
        .route("/v1/workspaces/{w}/nodes/{n}/export", get(export))
        .route("/v1/workspaces/{w}/nodes/{n}/coordinates", get(coordinates))
        .layer(limit)
        .with_state(state)
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

#[derive(Deserialize)]
struct SessionRequest {
    actor_id: String,
}

async fn open_session(State(app): App, body: Bytes) -> Result<Response, ApiError> {
    let req: SessionRequest = parse_json(&body)?;
    if req.actor_id.trim().is_empty() {
        return Err(ApiError::malformed("actor_id must not be empty"));
    }
    let token = app.open_session(&req.actor_id);
    Ok((StatusCode::CREATED, Json(json!({ "token": token, "actor_id": req.actor_id }))).into_response())
}

async fn list_corpora(State(app): App, _: Actor) -> Json<Value> {
    Json(json!({ "corpora": app.data.corpus_ids() }))
}

#[derive(Deserialize)]
struct CorpusRequest {
    corpus_id: String,
    field_map: FieldMap,
}

async fn create_corpus(State(app): App, _: Actor, body: Bytes) -> Result<Response, ApiError> {
    let req: CorpusRequest = parse_json(&body)?;
    app.create_corpus(&req.corpus_id, req.field_map).await?;
    Ok((StatusCode::CREATED, Json(json!({ "corpus_id": req.corpus_id, "count": 0 }))).into_response())
}

async fn corpus_info(State(app): App, _: Actor, Path(c): Path<String>) -> Result<Json<Value>, ApiError> {
    let ctx = app.corpus(&c).await?.context();
    Ok(Json(json!({
        "corpus_id": c,
        "count": ctx.corpus.len(),
        "field_map": ctx.corpus.field_map(),
        "provider_id": ctx.vectors.provider_id(),
        "dim": ctx.vectors.dim(),
        "sealed": app.is_sealed(&c),
    })))
}

#[derive(Deserialize)]
struct IngestParams {
    #[serde(default)]
    format: Option<InputFormat>,
    #[serde(default)]
    lenient: bool,
}

async fn ingest(
    State(app): App,
    _: Actor,
    Path(c): Path<String>,
    Query(p): Query<IngestParams>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let format = p.format.unwrap_or_else(|| {
        match headers.get(header::CONTENT_TYPE).and_then(|v| v.to_str().ok()) {
            Some(t) if t.starts_with("text/csv") => InputFormat::Csv,
            Some(t) if t.starts_with("application/json") => InputFormat::Json,
            _ => InputFormat::Jsonl,
        }
    });
    let summary = app.ingest(&c, body.to_vec(), format, p.lenient).await?;
    let total = app.corpus(&c).await?.context().corpus.len();
    let mut v = serde_json::to_value(summary).expect("summary serializes");
    v["total"] = total.into();
    Ok(Json(v))
}

#[derive(Deserialize)]
struct DocumentParams {
    corpus: Option<String>,
}

async fn document(
    State(app): App,
    _: Actor,
    Path(id): Path<String>,
    Query(p): Query<DocumentParams>,
) -> Result<Json<Value>, ApiError> {
    let candidates = match p.corpus {
        Some(c) => vec![c],
        None => app.data.corpus_ids(),
    };
    for c in candidates {
        let ctx = app.corpus(&c).await?.context();
        if let Ok(doc) = ctx.corpus.get_document(&id) {
            let mut v = serde_json::to_value(doc).expect("documents serialize");
            v["corpus_id"] = c.into();
            return Ok(Json(v));
        }
    }
    Err(ApiError::not_found("document", &id))
}

async fn list_workspaces(State(app): App, _: Actor) -> Json<Value> {
    Json(json!({ "workspaces": app.list_workspaces().await }))
}

#[derive(Deserialize)]
struct WorkspaceRequest {
    #[serde(default)]
    workspace_id: Option<String>,
    corpus_id: String,
    #[serde(default)]
    seed: Option<u64>,
}

async fn create_workspace(State(app): App, Actor(actor): Actor, body: Bytes) -> Result<Response, ApiError> {
    let req: WorkspaceRequest = parse_json(&body)?;
    let h = app.create_workspace(req.workspace_id, &req.corpus_id, req.seed, &actor).await?;
    let view = h.view();
    let body = json!({
        "workspace_id": h.workspace_id,
        "corpus_id": h.corpus_id,
        "seed": view.seed,
        "seq": view.last_seq,
    });
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

/// Header naming the seq a snapshot reflects.
pub const SEQ_HEADER: &str = "x-curate-seq";

async fn snapshot(State(app): App, _: Actor, Path(w): Path<String>) -> Result<Response, ApiError> {
    let view = app.workspace(&w).await?.view();
    let mut resp = (
        [(header::CONTENT_TYPE, "application/json")],
        view.snapshot().to_json(),
    )
        .into_response();
    resp.headers_mut().insert(SEQ_HEADER, HeaderValue::from(view.last_seq));
    Ok(resp)
}

/// A command body: the command's own fields plus optional `client_tag`
/// and `based_on_seq`.
fn split_command(body: &Bytes) -> Result<(Command, Option<String>), ApiError> {
    let mut v: Map<String, Value> = parse_json(body)?;
    let tag = match v.remove("client_tag") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s),
        Some(_) => return Err(ApiError::malformed("client_tag must be a string")),
    };
    match v.remove("based_on_seq") {
        None | Some(Value::Null) => {}
        Some(s) if s.is_u64() => {}
        Some(_) => return Err(ApiError::malformed("based_on_seq must be a non-negative integer")),
    }
    let cmd = serde_json::from_value(Value::Object(v)).map_err(|e| ApiError::malformed(e.to_string()))?;
    Ok((cmd, tag))
}

async fn command(
    State(app): App,
    Actor(actor): Actor,
    Path(w): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let h = app.workspace(&w).await?;
    let (cmd, tag) = split_command(&body)?;
    let receipt = h.apply(cmd, &actor, tag.as_deref()).await?;
    Ok(Json(serde_json::to_value(receipt).expect("receipts serialize")))
}

#[derive(Deserialize)]
struct LogParams {
    #[serde(default)]
    from_seq: u64,
    #[serde(default)]
    limit: Option<usize>,
}

async fn log(
    State(app): App,
    _: Actor,
    Path(w): Path<String>,
    Query(p): Query<LogParams>,
) -> Result<Json<Value>, ApiError> {
    let h = app.workspace(&w).await?;
    let events: Vec<Value> = h
        .events_from(p.from_seq, p.limit.unwrap_or(10_000).min(100_000))
        .iter()
        .map(|e| e.to_value())
        .collect();
    Ok(Json(json!({ "events": events, "last_seq": h.last_seq() })))
}

#[derive(Deserialize)]
struct PageParams {
    #[serde(default)]
    offset: usize,
    #[serde(default)]
    limit: Option<usize>,
}

pub const DEFAULT_PAGE: usize = 50;
pub const MAX_PAGE: usize = 1000;

/// A page over the output's entries, all lists concatenated in order.
/// Each entry names its list; `list_sizes` lets clients regroup. The stamp
/// is repeated on every page so clients notice a recompute mid-paging.
async fn output(
    State(app): App,
    _: Actor,
    Path((w, n)): Path<(String, String)>,
    Query(p): Query<PageParams>,
) -> Result<Json<Value>, ApiError> {
    let view = app.workspace(&w).await?.view();
    let node = view.graph.node(&n).ok_or_else(|| ApiError::not_found("node", &n))?;
    let limit = p.limit.unwrap_or(DEFAULT_PAGE).min(MAX_PAGE);
    let mut page = json!({
        "node_id": n,
        "offset": p.offset,
        "limit": limit,
        "total": 0,
        "entries": [],
    });
    let Some(out) = view.outputs.get(&n) else {
        page["state"] = "pending".into();
        page["stamp"] = Value::Null;
        page["current"] = false.into();
        return Ok(Json(page));
    };
    page["stamp"] = serde_json::to_value(out.stamp()).expect("stamps serialize");
    page["current"] = (out.stamp().seq == node.dirty_seq).into();
    match out {
        NodeOutput::Ready(c) => {
            let lists = &c.output.lists;
            let entries: Vec<Value> = lists
                .iter()
                .enumerate()
                .flat_map(|(i, l)| l.iter().map(move |d| (i, d)))
                .skip(p.offset)
                .take(limit)
                .map(|(i, d)| {
                    let mut e = json!({ "list": i, "doc_id": d.doc_id });
                    if let Some(s) = d.score {
                        e["score"] = s.into();
                    }
                    e
                })
                .collect();
            page["state"] = "ready".into();
            page["total"] = c.output.total_entries().into();
            page["list_sizes"] = lists.iter().map(Vec::len).collect::<Vec<_>>().into();
            page["noise"] = c.output.noise.into();
            page["entries"] = entries.into();
            if !c.warnings.is_empty() {
                page["warnings"] = c.warnings.clone().into();
            }
        }
        NodeOutput::Failed { error, .. } => {
            page["state"] = "failed".into();
            page["error"] = json!({ "code": error.code, "message": error.message });
        }
        NodeOutput::Blocked { upstream, .. } => {
            page["state"] = "blocked".into();
            page["blocked_by"] = upstream.clone().into();
        }
    }
    Ok(Json(page))
}

#[derive(Deserialize)]
struct ExportParams {
    #[serde(default)]
    format: Option<ExportFormat>,
}

/// The documents of a node's output, in output order, as JSON or CSV.
async fn export(
    State(app): App,
    _: Actor,
    Path((w, n)): Path<(String, String)>,
    Query(p): Query<ExportParams>,
) -> Result<Response, ApiError> {
    let h = app.workspace(&w).await?;
    let view = h.view();
    view.graph.node(&n).ok_or_else(|| ApiError::not_found("node", &n))?;
    let ready = view.outputs.get(&n).and_then(NodeOutput::ready).ok_or_else(|| {
        ApiError::conflict("OutputUnavailable", format!("node {n} has no ready output"))
    })?;
    let format = p.format.unwrap_or(ExportFormat::Json);
    let bytes = h.context().corpus.export_docs(&ready.output.flattened(), format)?;
    let content_type = match format {
        ExportFormat::Json => "application/json",
        ExportFormat::Csv => "text/csv; charset=utf-8",
    };
    Ok(([(header::CONTENT_TYPE, content_type)], bytes).into_response())
}

/// A Projection node's layout as `doc_id,dim0,...` CSV.
async fn coordinates(State(app): App, _: Actor, Path((w, n)): Path<(String, String)>) -> Result<Response, ApiError> {
    let h = app.workspace(&w).await?;
    let view = h.view();
    view.graph.node(&n).ok_or_else(|| ApiError::not_found("node", &n))?;
    let coords = view
        .outputs
        .get(&n)
        .and_then(NodeOutput::ready)
        .and_then(|r| r.coordinates.as_ref())
        .ok_or_else(|| ApiError::conflict("OutputUnavailable", format!("node {n} has no ready layout")))?;
    let ctx = h.context();
    let csv = coords.to_csv(|p| ctx.corpus.doc_at(p).doc_id.as_str());
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv).into_response())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_envelope_is_split_off() {
        let body = Bytes::from_static(br#"{"op":"MoveNode","node_id":"n1","position":{"x":1,"y":2},"client_tag":"t1","based_on_seq":4}"#);
        let (cmd, tag) = split_command(&body).unwrap();
        assert_eq!(tag.as_deref(), Some("t1"));
        assert!(matches!(cmd, Command::MoveNode { .. }));
        let bad = Bytes::from_static(br#"{"op":"Fly","client_tag":"t2"}"#);
        assert_eq!(split_command(&bad).unwrap_err().status, StatusCode::UNPROCESSABLE_ENTITY);
        let bad_tag = Bytes::from_static(br#"{"op":"Undo","client_tag":7}"#);
        assert!(split_command(&bad_tag).is_err());
    }
}
