use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use curate_core::corpus::{Corpus, FieldMap, IngestOptions, IngestSummary, InputFormat};
use curate_core::datadir::DataDir;
use curate_core::embedding::{EmbeddingProvider, VectorStore};
use curate_core::graph::{EngineContext, GraphState, NodeId, NodeOutput};
use curate_core::projection::{CancelToken, Job};
use curate_core::provenance::{read_log, ActionEvent, Change};
use curate_core::query::InvertedIndex;
use curate_core::workspace::{Command, Snapshot, Workspace};
use rand::RngCore;
use serde::Serialize;
use serde_json::{json, Value};
use tokio::sync::{broadcast, watch, Notify, Semaphore};

use crate::config::Config;
use crate::error::ApiError;

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))
}

pub struct AppState {
    pub config: Config,
    pub data: DataDir,
    pub provider: Arc<dyn EmbeddingProvider>,
    pub streams: Arc<Semaphore>,
    sessions: RwLock<HashMap<String, String>>,
    corpora: tokio::sync::Mutex<HashMap<String, Arc<CorpusHandle>>>,
    workspaces: tokio::sync::Mutex<HashMap<String, Arc<WorkspaceHandle>>>,
    /// Corpora some workspace is built on; they accept no more documents.
    sealed: Mutex<HashSet<String>>,
}

impl AppState {
    pub fn new(config: Config) -> Arc<Self> {
        let provider = config.provider();
        Self::with_provider(config, provider)
    }

    pub fn with_provider(config: Config, provider: Arc<dyn EmbeddingProvider>) -> Arc<Self> {
        let data = DataDir::new(&config.data_dir);
        let sealed = data
            .workspace_ids()
            .into_iter()
            .filter_map(|w| {
                let read = read_log(&data.workspace_dir(&w).join("log.jsonl")).ok()?;
                match &read.events.first()?.change {
                    Change::WorkspaceCreated { corpus_id, .. } => Some(corpus_id.clone()),
                    _ => None,
                }
            })
            .collect();
        Arc::new(AppState {
            streams: Arc::new(Semaphore::new(config.max_streams.max(1))),
            data,
            provider,
            config,
            sessions: RwLock::new(HashMap::new()),
            corpora: tokio::sync::Mutex::new(HashMap::new()),
            workspaces: tokio::sync::Mutex::new(HashMap::new()),
            sealed: Mutex::new(sealed),
        })
    }

    /// Issues a bearer token for `actor_id`.
    pub fn open_session(&self, actor_id: &str) -> String {
        let mut bytes = [0u8; 16];
        rand::rngs::OsRng.fill_bytes(&mut bytes);
        let token = hex::encode(bytes);
        self.sessions.write().unwrap().insert(token.clone(), actor_id.to_owned());
        token
    }

    pub fn actor(&self, token: &str) -> Option<String> {
        self.sessions.read().unwrap().get(token).cloned()
    }

    pub fn is_sealed(&self, corpus_id: &str) -> bool {
        self.sealed.lock().unwrap().contains(corpus_id)
    }

    pub async fn create_corpus(&self, corpus_id: &str, field_map: FieldMap) -> Result<(), ApiError> {
        if !DataDir::valid_id(corpus_id) {
            return Err(ApiError::malformed(format!("invalid corpus id {corpus_id:?}")));
        }
        let corpora = self.corpora.lock().await;
        if corpora.contains_key(corpus_id) || self.data.corpus_exists(corpus_id) {
            return Err(ApiError::conflict("CorpusExists", format!("corpus {corpus_id} already exists")));
        }
        let dir = self.data.corpus_dir(corpus_id);
        let corpus = Corpus::new(corpus_id, field_map);
        blocking(move || corpus.persist(&dir)).await??;
        Ok(())
    }

    pub async fn corpus(&self, corpus_id: &str) -> Result<Arc<CorpusHandle>, ApiError> {
        let mut corpora = self.corpora.lock().await;
        if let Some(h) = corpora.get(corpus_id) {
            return Ok(h.clone());
        }
        if !self.data.corpus_exists(corpus_id) {
            return Err(ApiError::not_found("corpus", corpus_id));
        }
        let (data, id, provider) = (self.data.clone(), corpus_id.to_owned(), self.provider.clone());
        let ctx = blocking(move || data.load_context(&id, provider, true)).await??;
        let handle = Arc::new(CorpusHandle {
            corpus_id: corpus_id.to_owned(),
            ctx: RwLock::new(ctx),
            ingest: tokio::sync::Mutex::new(()),
        });
        corpora.insert(corpus_id.to_owned(), handle.clone());
        Ok(handle)
    }

    /// Adds documents to a corpus and embeds them. All or nothing.
    pub async fn ingest(
        &self,
        corpus_id: &str,
        body: Vec<u8>,
        format: InputFormat,
        lenient: bool,
    ) -> Result<IngestSummary, ApiError> {
        let handle = self.corpus(corpus_id).await?;
        let _writer = handle.ingest.lock().await;
        if self.is_sealed(corpus_id) {
            return Err(ApiError::conflict(
                "CorpusSealed",
                format!("corpus {corpus_id} is used by a workspace and accepts no more documents"),
            ));
        }
        let ctx = handle.context();
        let (data, provider) = (self.data.clone(), self.provider.clone());
        let (summary, next) = blocking(move || -> Result<_, ApiError> {
            let mut corpus: Corpus = (*ctx.corpus).clone();
            let opts = IngestOptions {
                lenient,
                filter: None,
            };
            let summary = corpus.ingest(body.as_slice(), format, &opts)?;
            let vectors: VectorStore = data.embed(&corpus, provider.as_ref(), Some((*ctx.vectors).clone()))?;
            corpus.persist(&data.corpus_dir(corpus.corpus_id()))?;
            let index = InvertedIndex::build(&corpus);
            data.write_index(corpus.corpus_id(), &index)?;
            Ok((summary, EngineContext::from_parts(corpus, index, vectors, provider)))
        })
        .await??;
        *handle.ctx.write().unwrap() = next;
        Ok(summary)
    }

    pub async fn create_workspace(
        &self,
        workspace_id: Option<String>,
        corpus_id: &str,
        seed: Option<u64>,
        actor: &str,
    ) -> Result<Arc<WorkspaceHandle>, ApiError> {
        let workspace_id = workspace_id.unwrap_or_else(|| {
            let mut b = [0u8; 6];
            rand::rngs::OsRng.fill_bytes(&mut b);
            format!("w-{}", hex::encode(b))
        });
        if !DataDir::valid_id(&workspace_id) {
            return Err(ApiError::malformed(format!("invalid workspace id {workspace_id:?}")));
        }
        let corpus = self.corpus(corpus_id).await?;
        let mut workspaces = self.workspaces.lock().await;
        let dir = self.data.workspace_dir(&workspace_id);
        if workspaces.contains_key(&workspace_id) || dir.exists() {
            return Err(ApiError::conflict(
                "WorkspaceExists",
                format!("workspace {workspace_id} already exists"),
            ));
        }
        let _writer = corpus.ingest.lock().await;
        self.sealed.lock().unwrap().insert(corpus_id.to_owned());
        let seed = seed.unwrap_or(self.config.default_seed);
        let (id, cid, actor) = (workspace_id.clone(), corpus_id.to_owned(), actor.to_owned());
        let ws = blocking(move || Workspace::create(&dir, &id, &cid, seed, &actor, now_ms()))
            .await?
            .map_err(|e| ApiError::internal(e.to_string()))?;
        let handle = WorkspaceHandle::start(ws, corpus.context());
        workspaces.insert(workspace_id, handle.clone());
        Ok(handle)
    }

    pub async fn workspace(&self, workspace_id: &str) -> Result<Arc<WorkspaceHandle>, ApiError> {
        let mut workspaces = self.workspaces.lock().await;
        if let Some(h) = workspaces.get(workspace_id) {
            return Ok(h.clone());
        }
        let dir = self.data.workspace_dir(workspace_id);
        if !DataDir::valid_id(workspace_id) || !dir.join("log.jsonl").is_file() {
            return Err(ApiError::not_found("workspace", workspace_id));
        }
        let (ws, damage) = blocking(move || Workspace::open(&dir))
            .await?
            .map_err(|e| ApiError::internal(e.to_string()))?;
        if let Some(d) = damage {
            tracing::warn!(workspace = workspace_id, "log tail discarded: {d}");
        }
        let corpus = self.corpus(ws.corpus_id()).await?;
        let handle = WorkspaceHandle::start(ws, corpus.context());
        workspaces.insert(workspace_id.to_owned(), handle.clone());
        Ok(handle)
    }

    pub async fn list_workspaces(&self) -> Vec<String> {
        let mut ids: HashSet<String> = self.data.workspace_ids().into_iter().collect();
        ids.extend(self.workspaces.lock().await.keys().cloned());
        let mut v: Vec<String> = ids.into_iter().collect();
        v.sort();
        v
    }
}

pub struct CorpusHandle {
    pub corpus_id: String,
    ctx: RwLock<EngineContext>,
    ingest: tokio::sync::Mutex<()>,
}

impl CorpusHandle {
    pub fn context(&self) -> EngineContext {
        self.ctx.read().unwrap().clone()
    }
}

/// What a command produced, kept per client tag for retries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Receipt {
    pub seq: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node_id: Option<NodeId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edge_id: Option<String>,
    pub duplicate: bool,
}

/// Committed state readers see without waiting for the writer.
#[derive(Debug, Clone)]
pub struct View {
    pub workspace_id: String,
    pub last_seq: u64,
    pub seed: u64,
    pub graph: GraphState,
    pub outputs: HashMap<NodeId, NodeOutput>,
}

impl View {
    pub fn snapshot(&self) -> Snapshot {
        Snapshot::of(&self.workspace_id, self.seed, &self.graph)
    }
}

struct Running {
    token: CancelToken,
    /// Planned nodes with the dirty seq they were planned at.
    stamps: Vec<(NodeId, u64)>,
}

struct Writer {
    ws: Workspace,
    tags: HashMap<(String, String), Receipt>,
    running: Option<Running>,
}

/// One open workspace: a single writer, a committed view, the event
/// feed and a background recompute worker.
pub struct WorkspaceHandle {
    pub workspace_id: String,
    pub corpus_id: String,
    ctx: EngineContext,
    writer: tokio::sync::Mutex<Writer>,
    view: RwLock<Arc<View>>,
    log: RwLock<Vec<ActionEvent>>,
    seq_tx: watch::Sender<u64>,
    status_tx: broadcast::Sender<Value>,
    wake: Notify,
}

fn view_of(ws: &Workspace) -> View {
    View {
        workspace_id: ws.workspace_id().to_owned(),
        last_seq: ws.last_seq(),
        seed: ws.seed(),
        graph: ws.graph().clone(),
        outputs: ws.outputs().clone(),
    }
}

fn output_state(out: &NodeOutput) -> &'static str {
    match out {
        NodeOutput::Ready(_) => "ready",
        NodeOutput::Failed { .. } => "failed",
        NodeOutput::Blocked { .. } => "blocked",
    }
}

impl WorkspaceHandle {
    fn start(ws: Workspace, ctx: EngineContext) -> Arc<Self> {
        let (seq_tx, _) = watch::channel(ws.last_seq());
        let (status_tx, _) = broadcast::channel(1024);
        let handle = Arc::new(WorkspaceHandle {
            workspace_id: ws.workspace_id().to_owned(),
            corpus_id: ws.corpus_id().to_owned(),
            ctx,
            view: RwLock::new(Arc::new(view_of(&ws))),
            log: RwLock::new(ws.events().to_vec()),
            writer: tokio::sync::Mutex::new(Writer {
                ws,
                tags: HashMap::new(),
                running: None,
            }),
            seq_tx,
            status_tx,
            wake: Notify::new(),
        });
        tokio::spawn(handle.clone().recompute_loop());
        handle.wake.notify_one();
        handle
    }

    pub fn view(&self) -> Arc<View> {
        self.view.read().unwrap().clone()
    }

    pub fn context(&self) -> &EngineContext {
        &self.ctx
    }

    pub fn last_seq(&self) -> u64 {
        *self.seq_tx.borrow()
    }

    /// Up to `limit` logged events starting at `from_seq`.
    pub fn events_from(&self, from_seq: u64, limit: usize) -> Vec<ActionEvent> {
        let log = self.log.read().unwrap();
        let start = (from_seq as usize).min(log.len());
        log[start..(start + limit).min(log.len())].to_vec()
    }

    pub fn subscribe(&self) -> (watch::Receiver<u64>, broadcast::Receiver<Value>) {
        (self.seq_tx.subscribe(), self.status_tx.subscribe())
    }

    /// Applies a command in arrival order. A repeated `client_tag` from the
    /// same actor returns the first receipt without applying anything.
    pub async fn apply(&self, cmd: Command, actor: &str, client_tag: Option<&str>) -> Result<Receipt, ApiError> {
        let mut w = self.writer.lock().await;
        let key = client_tag.map(|t| (actor.to_owned(), t.to_owned()));
        if let Some(seen) = key.as_ref().and_then(|k| w.tags.get(k)) {
            return Ok(Receipt {
                duplicate: true,
                ..seen.clone()
            });
        }
        let applied = w.ws.apply(cmd, actor, now_ms(), &self.ctx.corpus)?;
        let receipt = Receipt {
            seq: applied.seq,
            node_id: applied.node_id,
            edge_id: applied.edge_id,
            duplicate: false,
        };
        if let Some(k) = key {
            w.tags.insert(k, receipt.clone());
        }
        if let Some(run) = &w.running {
            let graph = w.ws.graph();
            if run.stamps.iter().any(|(id, seq)| graph.node(id).map(|n| n.dirty_seq) != Some(*seq)) {
                run.token.cancel();
            }
        }
        self.log.write().unwrap().extend(applied.events);
        *self.view.write().unwrap() = Arc::new(view_of(&w.ws));
        drop(w);
        self.seq_tx.send_replace(receipt.seq);
        self.wake.notify_one();
        Ok(receipt)
    }

    fn status(&self, kind: &str, payload: Value) {
        let _ = self.status_tx.send(json!({ "kind": kind, "payload": payload }));
    }

    async fn recompute_loop(self: Arc<Self>) {
        loop {
            self.wake.notified().await;
            loop {
                let (plan, token) = {
                    let mut w = self.writer.lock().await;
                    let plan = w.ws.plan();
                    if plan.nodes().is_empty() {
                        break;
                    }
                    let graph = w.ws.graph();
                    let stamps = plan
                        .nodes()
                        .iter()
                        .map(|id| (id.clone(), graph.node(id).map_or(0, |n| n.dirty_seq)))
                        .collect();
                    let token = CancelToken::default();
                    w.running = Some(Running {
                        token: token.clone(),
                        stamps,
                    });
                    (plan, token)
                };
                let this = self.clone();
                let result = tokio::task::spawn_blocking(move || {
                    let current = Mutex::new(String::new());
                    let last_tenth = Mutex::new(usize::MAX);
                    let progress = |done: usize, total: usize| {
                        let tenth = done * 10 / total.max(1);
                        let mut last = last_tenth.lock().unwrap();
                        if *last != tenth {
                            *last = tenth;
                            let node_id = current.lock().unwrap().clone();
                            this.status("Progress", json!({ "node_id": node_id, "done": done, "total": total }));
                        }
                    };
                    let job = Job {
                        cancel: Some(&token),
                        progress: Some(&progress),
                    };
                    plan.run_observed(&this.ctx, &job, |id| {
                        *current.lock().unwrap() = id.clone();
                        *last_tenth.lock().unwrap() = usize::MAX;
                        this.status("Computing", json!({ "node_id": id }));
                    })
                })
                .await;
                let mut w = self.writer.lock().await;
                w.running = None;
                match result {
                    Ok(Ok(results)) => {
                        let stored = w.ws.commit(results);
                        *self.view.write().unwrap() = Arc::new(view_of(&w.ws));
                        for id in stored {
                            if let Some(out) = w.ws.output(&id) {
                                self.status(
                                    "OutputReady",
                                    json!({ "node_id": id, "state": output_state(out), "stamp": out.stamp() }),
                                );
                            }
                        }
                    }
                    Ok(Err(_cancelled)) => {}
                    Err(e) => {
                        tracing::error!(workspace = %self.workspace_id, "recompute failed: {e}");
                        break;
                    }
                }
            }
        }
    }
}
