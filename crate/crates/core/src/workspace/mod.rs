//! A workspace: the graph, its action log, undo/redo and cached node
//! outputs.

mod fold;
mod snapshot;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::graph::{
    compute_node, Cancelled, Edge, EngineContext, EngineError, GraphState, NodeConfig, NodeId, NodeOutput, Port,
    Position,
};
use crate::projection::Job;
use crate::provenance::{parse_log, ActionEvent, Cause, Change, LogWriter, NodeRecord, ProvenanceError};
use crate::query::parse_query;
use fold::Core;

pub use snapshot::{Snapshot, SnapshotEdge, SnapshotNode, SNAPSHOT_VERSION};

/// Moves of one node closer together than this undo as one step.
pub const MOVE_COALESCE_MS: u64 = 2000;
/// A full-state snapshot file is written every this many events.
pub const SNAPSHOT_INTERVAL: u64 = 500;

/// A mutation request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op")]
pub enum Command {
    AddNode {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        node_id: Option<NodeId>,
        #[serde(flatten)]
        config: NodeConfig,
        #[serde(default)]
        position: Position,
    },
    RemoveNode {
        node_id: NodeId,
    },
    UpdateConfig {
        node_id: NodeId,
        #[serde(flatten)]
        config: NodeConfig,
    },
    MoveNode {
        node_id: NodeId,
        position: Position,
    },
    AddEdge {
        from: NodeId,
        to: NodeId,
        port: Port,
    },
    RemoveEdge {
        edge_id: String,
    },
    AddGroupMember {
        node_id: NodeId,
        doc_id: String,
    },
    RemoveGroupMember {
        node_id: NodeId,
        doc_id: String,
    },
    SetSeed {
        seed: u64,
    },
    Undo,
    Redo,
}

/// What an accepted command produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Applied {
    /// Seq of the last event written.
    pub seq: u64,
    pub events: Vec<ActionEvent>,
    pub node_id: Option<NodeId>,
    pub edge_id: Option<String>,
}

/// Nodes to recompute, captured so the work can run without holding the
/// workspace.
pub struct RecomputePlan {
    graph: GraphState,
    seed: u64,
    order: Vec<NodeId>,
    outputs: HashMap<NodeId, NodeOutput>,
}

impl RecomputePlan {
    pub fn nodes(&self) -> &[NodeId] {
        &self.order
    }

    /// Computes every planned node in topological order.
    pub fn run(self, ctx: &EngineContext, job: &Job<'_>) -> Result<Vec<(NodeId, NodeOutput)>, Cancelled> {
        self.run_observed(ctx, job, |_| {})
    }

    /// Like [`run`](Self::run), calling `started` before each node.
    pub fn run_observed(
        mut self,
        ctx: &EngineContext,
        job: &Job<'_>,
        mut started: impl FnMut(&NodeId),
    ) -> Result<Vec<(NodeId, NodeOutput)>, Cancelled> {
        let mut done = Vec::with_capacity(self.order.len());
        for id in &self.order {
            started(id);
            let node = self.graph.node(id).expect("planned nodes exist");
            let out = compute_node(node, &self.graph, &self.outputs, ctx, self.seed, job)?;
            self.outputs.insert(id.clone(), out.clone());
            done.push((id.clone(), out));
        }
        Ok(done)
    }
}

pub struct Workspace {
    core: Core,
    events: Vec<ActionEvent>,
    outputs: HashMap<NodeId, NodeOutput>,
    writer: Option<LogWriter>,
    dir: Option<PathBuf>,
}

impl std::fmt::Debug for Workspace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Workspace")
            .field("workspace_id", &self.core.workspace_id)
            .field("last_seq", &self.core.last_seq)
            .finish()
    }
}

fn header(workspace_id: &str, corpus_id: &str, seed: u64, actor: &str, ts: u64) -> ActionEvent {
    ActionEvent {
        seq: 0,
        actor: actor.to_owned(),
        ts,
        change: Change::WorkspaceCreated {
            workspace_id: workspace_id.to_owned(),
            corpus_id: corpus_id.to_owned(),
            seed,
        },
        cause: Cause::Do,
    }
}

fn validate_config(config: &NodeConfig, corpus: &Corpus) -> Result<(), EngineError> {
    match config {
        NodeConfig::Document { doc_id } => {
            corpus.position(doc_id).ok_or_else(|| EngineError::NotFound(doc_id.clone()))?;
        }
        NodeConfig::Search { query } => {
            parse_query(query).map_err(|e| EngineError::InvalidConfig(e.to_string()))?;
        }
        NodeConfig::Group { members, .. } => {
            let mut seen = std::collections::HashSet::new();
            for m in members {
                corpus.position(m).ok_or_else(|| EngineError::NotFound(m.clone()))?;
                if !seen.insert(m) {
                    return Err(EngineError::AlreadyMember(m.clone()));
                }
            }
        }
        NodeConfig::Rank(c) => c.validate().map_err(EngineError::InvalidConfig)?,
        NodeConfig::Projection(c) => c.validate().map_err(EngineError::InvalidConfig)?,
        NodeConfig::Note { .. } | NodeConfig::Union {} | NodeConfig::Intersection {} | NodeConfig::Difference { .. } => {}
    }
    Ok(())
}

impl Workspace {
    /// An in-memory workspace.
    pub fn new(workspace_id: &str, corpus_id: &str, seed: u64) -> Self {
        Self::with_header(header(workspace_id, corpus_id, seed, "system", 0))
    }

    fn with_header(h: ActionEvent) -> Self {
        Workspace {
            core: Core::from_header(&h).expect("valid header"),
            events: vec![h],
            outputs: HashMap::new(),
            writer: None,
            dir: None,
        }
    }

    /// Creates a workspace persisted under `dir` (which must not hold a
    /// log yet).
    pub fn create(
        dir: &Path,
        workspace_id: &str,
        corpus_id: &str,
        seed: u64,
        actor: &str,
        ts: u64,
    ) -> Result<Self, ProvenanceError> {
        std::fs::create_dir_all(dir)?;
        let h = header(workspace_id, corpus_id, seed, actor, ts);
        let writer = LogWriter::create(&dir.join("log.jsonl"), &h)?;
        let mut ws = Self::with_header(h);
        ws.writer = Some(writer);
        ws.dir = Some(dir.to_owned());
        Ok(ws)
    }

    /// Rebuilds a workspace from its log, starting from the newest usable
    /// snapshot file. A damaged tail is cut off and reported alongside the
    /// recovered workspace.
    pub fn open(dir: &Path) -> Result<(Self, Option<ProvenanceError>), ProvenanceError> {
        let path = dir.join("log.jsonl");
        let read = parse_log(&std::fs::read(&path)?);
        let mut ws = Self::from_events(&read.events, Some(dir))?;
        ws.writer = Some(LogWriter::open(&path, read.good_len)?);
        ws.dir = Some(dir.to_owned());
        Ok((ws, read.damage))
    }

    /// Folds a log (header first) into a workspace.
    pub fn replay(events: &[ActionEvent]) -> Result<Self, ProvenanceError> {
        Self::from_events(events, None)
    }

    fn from_events(events: &[ActionEvent], snapshots: Option<&Path>) -> Result<Self, ProvenanceError> {
        let first = events.first().ok_or(ProvenanceError::CorruptLog {
            seq: 0,
            reason: "empty log".into(),
        })?;
        let corrupt = |seq: u64, reason: String| ProvenanceError::CorruptLog { seq, reason };
        let mut core = Core::from_header(first).map_err(|r| corrupt(0, r))?;
        let last = events.last().map_or(0, |e| e.seq);
        if let Some(snap) = snapshots.and_then(|d| snapshot::latest_state(d, last)) {
            if snap.workspace_id == core.workspace_id {
                core = snap;
            }
        }
        for ev in &events[(core.last_seq as usize + 1).min(events.len())..] {
            core.fold(ev).map_err(|r| corrupt(ev.seq, r))?;
        }
        Ok(Workspace {
            core,
            events: events.to_vec(),
            outputs: HashMap::new(),
            writer: None,
            dir: None,
        })
    }

    /// Builds an in-memory workspace from a snapshot by replaying it as
    /// commands, so every node and edge is validated. Errors name the node
    /// or edge that was rejected.
    pub fn from_snapshot(snap: &Snapshot, corpus: &Corpus, actor: &str, ts: u64) -> Result<Self, (String, EngineError)> {
        let mut ws = Self::with_header(header(&snap.workspace_id, corpus.corpus_id(), snap.seed, actor, ts));
        for n in &snap.nodes {
            let cmd = Command::AddNode {
                node_id: Some(n.node_id.clone()),
                config: n.config.clone(),
                position: n.position,
            };
            ws.apply(cmd, actor, ts, corpus).map_err(|e| (format!("node {}", n.node_id), e))?;
        }
        for e in &snap.edges {
            let cmd = Command::AddEdge {
                from: e.from.clone(),
                to: e.to.clone(),
                port: e.port,
            };
            ws.apply(cmd, actor, ts, corpus)
                .map_err(|err| (format!("edge {} -> {}", e.from, e.to), err))?;
        }
        Ok(ws)
    }

    pub fn workspace_id(&self) -> &str {
        &self.core.workspace_id
    }

    pub fn corpus_id(&self) -> &str {
        &self.core.corpus_id
    }

    pub fn seed(&self) -> u64 {
        self.core.seed
    }

    pub fn last_seq(&self) -> u64 {
        self.core.last_seq
    }

    pub fn graph(&self) -> &GraphState {
        &self.core.graph
    }

    /// The full log, header first.
    pub fn events(&self) -> &[ActionEvent] {
        &self.events
    }

    pub fn can_undo(&self) -> bool {
        !self.core.undo.is_empty()
    }

    pub fn can_redo(&self) -> bool {
        !self.core.redo.is_empty()
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot::of(&self.core.workspace_id, self.core.seed, &self.core.graph)
    }

    pub fn output(&self, node_id: &str) -> Option<&NodeOutput> {
        self.outputs.get(node_id)
    }

    pub fn outputs(&self) -> &HashMap<NodeId, NodeOutput> {
        &self.outputs
    }

    /// Validates and applies a command, logging its events durably before
    /// the state changes. A rejected command leaves everything untouched.
    pub fn apply(&mut self, cmd: Command, actor: &str, ts: u64, corpus: &Corpus) -> Result<Applied, EngineError> {
        let mut next = self.core.clone();
        let mut new_events = Vec::new();
        let mut node_id = None;
        let mut edge_id = None;
        let mut emit = |next: &mut Core, change: Change, cause: Cause| -> Result<(), EngineError> {
            let ev = ActionEvent {
                seq: next.last_seq + 1,
                actor: actor.to_owned(),
                ts,
                change,
                cause,
            };
            next.fold(&ev).map_err(EngineError::InvalidConfig)?;
            new_events.push(ev);
            Ok(())
        };
        let node = |id: &str| next_node(&self.core, id);
        match cmd {
            Command::AddNode {
                node_id: wanted,
                config,
                position,
            } => {
                validate_config(&config, corpus)?;
                let id = match wanted {
                    Some(id) if self.core.graph.node(&id).is_some() => return Err(EngineError::DuplicateNode(id)),
                    Some(id) if id.is_empty() => return Err(EngineError::InvalidConfig("empty node id".into())),
                    Some(id) => id,
                    None => format!("n{}", self.core.next_node),
                };
                let record = NodeRecord {
                    node_id: id.clone(),
                    ordinal: self.core.next_ordinal,
                    config,
                    position,
                };
                emit(&mut next, Change::NodeAdded { node: record, edges: Vec::new() }, Cause::Do)?;
                node_id = Some(id);
            }
            Command::RemoveNode { node_id: id } => {
                let record = self.core.record(&id).ok_or_else(|| EngineError::NotFound(id.clone()))?;
                let edges = self.core.graph.incident_edges(&id);
                emit(&mut next, Change::NodeRemoved { node: record, edges }, Cause::Do)?;
                node_id = Some(id);
            }
            Command::UpdateConfig { node_id: id, config } => {
                let before = node(&id)?.config.clone();
                if before.kind() != config.kind() {
                    return Err(EngineError::InvalidConfig(format!(
                        "node {id} is a {:?}, not a {:?}",
                        before.kind(),
                        config.kind()
                    )));
                }
                validate_config(&config, corpus)?;
                emit(
                    &mut next,
                    Change::NodeConfigChanged {
                        node_id: id.clone(),
                        before,
                        after: config,
                    },
                    Cause::Do,
                )?;
                node_id = Some(id);
            }
            Command::MoveNode { node_id: id, position } => {
                let from = node(&id)?.position;
                let coalesce = self.core.undo.last().and_then(|top| top.last()).is_some_and(|&s| {
                    s == self.core.last_seq
                        && self.events[s as usize].cause == Cause::Do
                        && matches!(&self.events[s as usize].change, Change::NodeMoved { node_id: n, .. } if *n == id)
                        && ts >= self.events[s as usize].ts
                        && ts - self.events[s as usize].ts <= MOVE_COALESCE_MS
                });
                emit(
                    &mut next,
                    Change::NodeMoved {
                        node_id: id.clone(),
                        from,
                        to: position,
                        coalesce,
                    },
                    Cause::Do,
                )?;
                node_id = Some(id);
            }
            Command::AddEdge { from, to, port } => {
                self.core.graph.check_edge(&from, &to, port)?;
                let edge = Edge {
                    edge_id: format!("e{}", self.core.next_edge),
                    from,
                    to,
                    port,
                };
                edge_id = Some(edge.edge_id.clone());
                emit(&mut next, Change::EdgeAdded { edge }, Cause::Do)?;
            }
            Command::RemoveEdge { edge_id: id } => {
                let edge = self.core.graph.edge(&id).cloned().ok_or_else(|| EngineError::NotFound(id.clone()))?;
                emit(&mut next, Change::EdgeRemoved { edge }, Cause::Do)?;
                edge_id = Some(id);
            }
            Command::AddGroupMember { node_id: id, doc_id } => {
                let members = group_members(&self.core, &id)?;
                corpus.position(&doc_id).ok_or_else(|| EngineError::NotFound(doc_id.clone()))?;
                if members.contains(&doc_id) {
                    return Err(EngineError::AlreadyMember(doc_id));
                }
                let index = members.len();
                emit(&mut next, Change::GroupMemberAdded { node_id: id.clone(), doc_id, index }, Cause::Do)?;
                node_id = Some(id);
            }
            Command::RemoveGroupMember { node_id: id, doc_id } => {
                let members = group_members(&self.core, &id)?;
                let index = members
                    .iter()
                    .position(|m| *m == doc_id)
                    .ok_or_else(|| EngineError::NotFound(doc_id.clone()))?;
                emit(&mut next, Change::GroupMemberRemoved { node_id: id.clone(), doc_id, index }, Cause::Do)?;
                node_id = Some(id);
            }
            Command::SetSeed { seed } => {
                emit(
                    &mut next,
                    Change::SeedSet {
                        before: self.core.seed,
                        after: seed,
                    },
                    Cause::Do,
                )?;
            }
            Command::Undo | Command::Redo => {
                let undo = matches!(cmd, Command::Undo);
                let entry = if undo { self.core.undo.last() } else { self.core.redo.last() };
                let entry = entry
                    .cloned()
                    .ok_or(if undo { EngineError::NothingToUndo } else { EngineError::NothingToRedo })?;
                for &s in entry.iter().rev() {
                    let change = next.inverse(&self.events[s as usize].change);
                    let cause = if undo { Cause::Undo { of: s } } else { Cause::Redo { of: s } };
                    emit(&mut next, change, cause)?;
                }
            }
        }
        if let Some(w) = self.writer.as_mut() {
            w.append(&new_events).map_err(|e| EngineError::StorageFailure(e.to_string()))?;
        }
        let crossed = self.core.last_seq / SNAPSHOT_INTERVAL != next.last_seq / SNAPSHOT_INTERVAL;
        self.core = next;
        self.events.extend(new_events.iter().cloned());
        let graph = &self.core.graph;
        self.outputs.retain(|id, _| graph.node(id).is_some());
        if crossed {
            if let Some(dir) = &self.dir {
                // A snapshot is only a cache; the log is already durable.
                let _ = snapshot::write_state(dir, &self.core);
            }
        }
        Ok(Applied {
            seq: self.core.last_seq,
            events: new_events,
            node_id,
            edge_id,
        })
    }

    /// Nodes whose cached output is missing or older than their last
    /// invalidation, in topological order.
    pub fn stale_nodes(&self) -> Vec<NodeId> {
        self.core
            .graph
            .topo_order()
            .into_iter()
            .filter(|id| {
                let node = self.core.graph.node(id).expect("ordered nodes exist");
                self.outputs.get(id).is_none_or(|o| o.stamp().seq != node.dirty_seq)
            })
            .collect()
    }

    pub fn plan(&self) -> RecomputePlan {
        RecomputePlan {
            graph: self.core.graph.clone(),
            seed: self.core.seed,
            order: self.stale_nodes(),
            outputs: self.outputs.clone(),
        }
    }

    /// Stores computed outputs whose node has not been invalidated since
    /// the plan was taken. Returns the ids stored.
    pub fn commit(&mut self, results: Vec<(NodeId, NodeOutput)>) -> Vec<NodeId> {
        let mut stored = Vec::new();
        for (id, out) in results {
            let current = self.core.graph.node(&id).map(|n| n.dirty_seq);
            if current == Some(out.stamp().seq) {
                self.outputs.insert(id.clone(), out);
                stored.push(id);
            }
        }
        stored
    }

    /// Recomputes every stale node. Returns the refreshed ids.
    pub fn recompute(&mut self, ctx: &EngineContext) -> Vec<NodeId> {
        let results = self.plan().run(ctx, &Job::default()).expect("no cancel token");
        self.commit(results)
    }

    /// Every node's output computed from nothing, for checking the cache.
    pub fn recompute_from_scratch(&self, ctx: &EngineContext) -> HashMap<NodeId, NodeOutput> {
        let plan = RecomputePlan {
            graph: self.core.graph.clone(),
            seed: self.core.seed,
            order: self.core.graph.topo_order(),
            outputs: HashMap::new(),
        };
        plan.run(ctx, &Job::default()).expect("no cancel token").into_iter().collect()
    }

    /// Sorted `(node_id, output JSON)` pairs, for byte comparison.
    pub fn outputs_json(&self) -> BTreeMap<NodeId, String> {
        self.outputs.iter().map(|(k, v)| (k.clone(), output_json(v).to_string())).collect()
    }
}

fn next_node<'a>(core: &'a Core, id: &str) -> Result<&'a crate::graph::Node, EngineError> {
    core.graph.node(id).ok_or_else(|| EngineError::NotFound(id.to_owned()))
}

fn group_members<'a>(core: &'a Core, id: &str) -> Result<&'a Vec<String>, EngineError> {
    match &next_node(core, id)?.config {
        NodeConfig::Group { members, .. } => Ok(members),
        other => Err(EngineError::InvalidConfig(format!("node {id} is a {:?}, not a Group", other.kind()))),
    }
}

/// JSON form of a node output: the document lists when ready, otherwise
/// the error or blocking node with the stamp.
pub fn output_json(out: &NodeOutput) -> serde_json::Value {
    match out {
        NodeOutput::Ready(c) => {
            let mut v = serde_json::to_value(&c.output).expect("outputs serialize");
            if !c.warnings.is_empty() {
                v["warnings"] = serde_json::to_value(&c.warnings).expect("strings serialize");
            }
            v
        }
        NodeOutput::Failed { stamp, error } => serde_json::json!({ "error": error, "stamp": stamp }),
        NodeOutput::Blocked { stamp, upstream } => serde_json::json!({ "blocked_by": upstream, "stamp": stamp }),
    }
}
