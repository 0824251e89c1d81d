use serde::{Deserialize, Serialize};

use crate::graph::{GraphState, Node, NodeConfig};
use crate::provenance::{ActionEvent, Cause, Change, NodeRecord};

/// Everything the log determines: the graph, counters and undo history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct Core {
    pub workspace_id: String,
    pub corpus_id: String,
    pub seed: u64,
    pub graph: GraphState,
    pub last_seq: u64,
    pub next_node: u64,
    pub next_edge: u64,
    pub next_ordinal: u64,
    /// Undoable actions, each a list of event seqs.
    pub undo: Vec<Vec<u64>>,
    pub redo: Vec<Vec<u64>>,
    /// Seqs emitted so far by an undo or redo still in progress.
    pub building: Vec<u64>,
}

fn numbered(id: &str, prefix: char) -> Option<u64> {
    id.strip_prefix(prefix)?.parse().ok()
}

impl Core {
    pub fn new(workspace_id: &str, corpus_id: &str, seed: u64) -> Self {
        Core {
            workspace_id: workspace_id.to_owned(),
            corpus_id: corpus_id.to_owned(),
            seed,
            graph: GraphState::default(),
            last_seq: 0,
            next_node: 1,
            next_edge: 1,
            next_ordinal: 0,
            undo: Vec::new(),
            redo: Vec::new(),
            building: Vec::new(),
        }
    }

    pub fn from_header(ev: &ActionEvent) -> Result<Self, String> {
        match &ev.change {
            Change::WorkspaceCreated {
                workspace_id,
                corpus_id,
                seed,
            } if ev.seq == 0 => Ok(Core::new(workspace_id, corpus_id, *seed)),
            _ => Err("log does not start with a WorkspaceCreated header".into()),
        }
    }

    pub fn record(&self, id: &str) -> Option<NodeRecord> {
        self.graph.node(id).map(|n| NodeRecord {
            node_id: n.node_id.clone(),
            ordinal: n.ordinal,
            config: n.config.clone(),
            position: n.position,
        })
    }

    fn dirty_downstream(&mut self, ids: &[&str], seq: u64) {
        let d = self.graph.downstream(ids.iter().copied());
        self.graph.mark_dirty(&d, seq);
    }

    fn insert_edge(&mut self, edge: &crate::graph::Edge, seq: u64) -> Result<(), String> {
        if self.graph.edge(&edge.edge_id).is_some() {
            return Err(format!("edge {} already exists", edge.edge_id));
        }
        if self.graph.node(&edge.from).is_none() || self.graph.node(&edge.to).is_none() {
            return Err(format!("edge {} has a missing endpoint", edge.edge_id));
        }
        let n = numbered(&edge.edge_id, 'e').ok_or_else(|| format!("bad edge id {}", edge.edge_id))?;
        self.next_edge = self.next_edge.max(n + 1);
        self.graph.insert_edge(edge.clone());
        if !self.graph.is_acyclic() {
            return Err(format!("edge {} closes a cycle", edge.edge_id));
        }
        self.dirty_downstream(&[&edge.to], seq);
        Ok(())
    }

    fn apply_change(&mut self, change: &Change, seq: u64) -> Result<(), String> {
        match change {
            Change::WorkspaceCreated { .. } => return Err("second WorkspaceCreated".into()),
            Change::NodeAdded { node, edges } => {
                if self.graph.node(&node.node_id).is_some() {
                    return Err(format!("node {} already exists", node.node_id));
                }
                self.graph.insert_node(Node {
                    node_id: node.node_id.clone(),
                    ordinal: node.ordinal,
                    config: node.config.clone(),
                    position: node.position,
                    dirty_seq: seq,
                });
                self.next_ordinal = self.next_ordinal.max(node.ordinal + 1);
                if let Some(n) = numbered(&node.node_id, 'n') {
                    self.next_node = self.next_node.max(n + 1);
                }
                for e in edges {
                    self.insert_edge(e, seq)?;
                }
            }
            Change::NodeRemoved { node, .. } => {
                let succ: Vec<String> = self
                    .graph
                    .edges()
                    .filter(|e| e.from == node.node_id)
                    .map(|e| e.to.clone())
                    .collect();
                let succ: Vec<&str> = succ.iter().map(String::as_str).collect();
                self.dirty_downstream(&succ, seq);
                self.graph
                    .remove_node(&node.node_id)
                    .ok_or_else(|| format!("node {} does not exist", node.node_id))?;
            }
            Change::NodeConfigChanged { node_id, after, .. } => {
                let n = self.graph.node_mut(node_id).ok_or_else(|| format!("node {node_id} does not exist"))?;
                if n.config.kind() != after.kind() {
                    return Err(format!("node {node_id} cannot change kind"));
                }
                n.config = after.clone();
                self.dirty_downstream(&[node_id], seq);
            }
            Change::NodeMoved { node_id, to, .. } => {
                let n = self.graph.node_mut(node_id).ok_or_else(|| format!("node {node_id} does not exist"))?;
                n.position = *to;
            }
            Change::EdgeAdded { edge } => self.insert_edge(edge, seq)?,
            Change::EdgeRemoved { edge } => {
                let removed = self
                    .graph
                    .remove_edge(&edge.edge_id)
                    .ok_or_else(|| format!("edge {} does not exist", edge.edge_id))?;
                self.dirty_downstream(&[&removed.to], seq);
            }
            Change::GroupMemberAdded { node_id, doc_id, index } => {
                let members = self.members(node_id)?;
                if *index > members.len() || members.contains(doc_id) {
                    return Err(format!("cannot add {doc_id} to {node_id} at {index}"));
                }
                members.insert(*index, doc_id.clone());
                self.dirty_downstream(&[node_id], seq);
            }
            Change::GroupMemberRemoved { node_id, doc_id, index } => {
                let members = self.members(node_id)?;
                if members.get(*index) != Some(doc_id) {
                    return Err(format!("{doc_id} is not member {index} of {node_id}"));
                }
                members.remove(*index);
                self.dirty_downstream(&[node_id], seq);
            }
            Change::SeedSet { after, .. } => {
                self.seed = *after;
                let seeded: Vec<String> = self
                    .graph
                    .nodes()
                    .filter(|n| matches!(&n.config, NodeConfig::Projection(c) if c.seed.is_none()))
                    .map(|n| n.node_id.clone())
                    .collect();
                let seeded: Vec<&str> = seeded.iter().map(String::as_str).collect();
                self.dirty_downstream(&seeded, seq);
            }
        }
        Ok(())
    }

    fn members(&mut self, node_id: &str) -> Result<&mut Vec<String>, String> {
        match self.graph.node_mut(node_id).map(|n| &mut n.config) {
            Some(NodeConfig::Group { members, .. }) => Ok(members),
            Some(_) => Err(format!("node {node_id} is not a group")),
            None => Err(format!("node {node_id} does not exist")),
        }
    }

    /// Applies one logged event. The single transition function shared by
    /// live mutation and replay.
    pub fn fold(&mut self, ev: &ActionEvent) -> Result<(), String> {
        if ev.seq != self.last_seq + 1 {
            return Err(format!("expected seq {}, found {}", self.last_seq + 1, ev.seq));
        }
        self.apply_change(&ev.change, ev.seq)?;
        match ev.cause {
            Cause::Do => {
                self.redo.clear();
                self.building.clear();
                let coalesce = matches!(ev.change, Change::NodeMoved { coalesce: true, .. });
                match self.undo.last_mut() {
                    Some(top) if coalesce => top.push(ev.seq),
                    _ => self.undo.push(vec![ev.seq]),
                }
            }
            Cause::Undo { of } => Self::step(&mut self.undo, &mut self.redo, &mut self.building, of, ev.seq)?,
            Cause::Redo { of } => Self::step(&mut self.redo, &mut self.undo, &mut self.building, of, ev.seq)?,
        }
        self.last_seq = ev.seq;
        Ok(())
    }

    fn step(from: &mut Vec<Vec<u64>>, to: &mut Vec<Vec<u64>>, building: &mut Vec<u64>, of: u64, seq: u64) -> Result<(), String> {
        let top = from.last_mut().ok_or("nothing to invert")?;
        if top.last() != Some(&of) {
            return Err(format!("event {seq} inverts {of}, which is not next in line"));
        }
        top.pop();
        building.push(seq);
        if top.is_empty() {
            from.pop();
            to.push(std::mem::take(building));
        }
        Ok(())
    }

    /// Inverse of `change` against the current state.
    pub fn inverse(&self, change: &Change) -> Change {
        match change {
            Change::NodeAdded { node, .. } => Change::NodeRemoved {
                node: self.record(&node.node_id).unwrap_or_else(|| node.clone()),
                edges: self.graph.incident_edges(&node.node_id),
            },
            Change::NodeRemoved { node, edges } => Change::NodeAdded {
                node: node.clone(),
                edges: edges.clone(),
            },
            Change::NodeConfigChanged { node_id, before, after } => Change::NodeConfigChanged {
                node_id: node_id.clone(),
                before: self.graph.node(node_id).map_or_else(|| after.clone(), |n| n.config.clone()),
                after: before.clone(),
            },
            Change::NodeMoved { node_id, from, to, .. } => Change::NodeMoved {
                node_id: node_id.clone(),
                from: *to,
                to: *from,
                coalesce: false,
            },
            Change::EdgeAdded { edge } => Change::EdgeRemoved { edge: edge.clone() },
            Change::EdgeRemoved { edge } => Change::EdgeAdded { edge: edge.clone() },
            Change::GroupMemberAdded { node_id, doc_id, index } => Change::GroupMemberRemoved {
                node_id: node_id.clone(),
                doc_id: doc_id.clone(),
                index: *index,
            },
            Change::GroupMemberRemoved { node_id, doc_id, index } => Change::GroupMemberAdded {
                node_id: node_id.clone(),
                doc_id: doc_id.clone(),
                index: *index,
            },
            Change::SeedSet { before, after } => Change::SeedSet {
                before: *after,
                after: *before,
            },
            Change::WorkspaceCreated { .. } => unreachable!("the header is never undone"),
        }
    }
}
