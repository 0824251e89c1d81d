use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use super::{port_allowed, Edge, EngineError, NodeConfig, NodeId, NodeKind, Port, Position};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub node_id: NodeId,
    /// Creation order; breaks ties in topological order.
    pub ordinal: u64,
    #[serde(flatten)]
    pub config: NodeConfig,
    pub position: Position,
    /// Seq of the last event that invalidated this node's output.
    pub dirty_seq: u64,
}

impl Node {
    pub fn kind(&self) -> NodeKind {
        self.config.kind()
    }
}

/// Nodes and edges. Every method that adds an edge keeps the graph
/// acyclic.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphState {
    nodes: BTreeMap<NodeId, Node>,
    edges: BTreeMap<u64, Edge>,
}

impl GraphState {
    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub(crate) fn node_mut(&mut self, id: &str) -> Option<&mut Node> {
        self.nodes.get_mut(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Nodes in creation order.
    pub fn nodes_by_ordinal(&self) -> Vec<&Node> {
        let mut v: Vec<&Node> = self.nodes.values().collect();
        v.sort_by_key(|n| n.ordinal);
        v
    }

    /// Edges in creation order.
    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values()
    }

    pub fn edge(&self, edge_id: &str) -> Option<&Edge> {
        self.edges.get(&Edge::number(edge_id)?)
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty() && self.edges.is_empty()
    }

    /// Incoming edges of `id`, in creation order.
    pub fn inputs(&self, id: &str) -> Vec<&Edge> {
        self.edges.values().filter(|e| e.to == id).collect()
    }

    pub fn incident_edges(&self, id: &str) -> Vec<Edge> {
        self.edges
            .values()
            .filter(|e| e.from == id || e.to == id)
            .cloned()
            .collect()
    }

    pub(crate) fn insert_node(&mut self, node: Node) {
        self.nodes.insert(node.node_id.clone(), node);
    }

    /// Removes a node and its incident edges.
    pub(crate) fn remove_node(&mut self, id: &str) -> Option<(Node, Vec<Edge>)> {
        let node = self.nodes.remove(id)?;
        let incident = self.incident_edges(id);
        self.edges.retain(|_, e| e.from != id && e.to != id);
        Some((node, incident))
    }

    pub(crate) fn insert_edge(&mut self, edge: Edge) {
        let n = Edge::number(&edge.edge_id).expect("edge ids are e<n>");
        self.edges.insert(n, edge);
    }

    pub(crate) fn remove_edge(&mut self, edge_id: &str) -> Option<Edge> {
        self.edges.remove(&Edge::number(edge_id)?)
    }

    /// True when `target` can be reached from `start` along edges.
    pub fn reaches(&self, start: &str, target: &str) -> bool {
        let mut stack = vec![start];
        let mut seen = BTreeSet::new();
        while let Some(n) = stack.pop() {
            if n == target {
                return true;
            }
            if seen.insert(n) {
                stack.extend(self.edges.values().filter(|e| e.from == n).map(|e| e.to.as_str()));
            }
        }
        false
    }

    /// Checks that an edge may be added.
    pub fn check_edge(&self, from: &str, to: &str, port: Port) -> Result<(), EngineError> {
        let f = self.nodes.get(from).ok_or_else(|| EngineError::NotFound(from.to_owned()))?;
        let t = self.nodes.get(to).ok_or_else(|| EngineError::NotFound(to.to_owned()))?;
        if !port_allowed(f.kind(), t.kind(), port) {
            return Err(EngineError::IllegalPort(format!(
                "{:?} -> {:?} ({:?})",
                f.kind(),
                t.kind(),
                port
            )));
        }
        if self.edges.values().any(|e| e.from == from && e.to == to && e.port == port) {
            return Err(EngineError::DuplicateEdge);
        }
        if from == to || self.reaches(to, from) {
            return Err(EngineError::WouldCycle);
        }
        Ok(())
    }

    /// `ids` plus everything reachable from them.
    pub fn downstream<'a, I: IntoIterator<Item = &'a str>>(&self, ids: I) -> BTreeSet<NodeId> {
        let mut out = BTreeSet::new();
        let mut stack: Vec<String> = ids.into_iter().map(str::to_owned).collect();
        while let Some(n) = stack.pop() {
            if out.insert(n.clone()) {
                stack.extend(self.edges.values().filter(|e| e.from == n).map(|e| e.to.clone()));
            }
        }
        out
    }

    /// Marks nodes as invalidated at `seq`.
    pub(crate) fn mark_dirty(&mut self, ids: &BTreeSet<NodeId>, seq: u64) {
        for id in ids {
            if let Some(n) = self.nodes.get_mut(id) {
                n.dirty_seq = seq;
            }
        }
    }

    /// Kahn's algorithm; among ready nodes the lowest ordinal goes first.
    pub fn topo_order(&self) -> Vec<NodeId> {
        let mut indegree: HashMap<&str, usize> = self.nodes.keys().map(|k| (k.as_str(), 0)).collect();
        for e in self.edges.values() {
            *indegree.get_mut(e.to.as_str()).expect("edge endpoints exist") += 1;
        }
        let mut ready: BinaryHeap<std::cmp::Reverse<(u64, &str)>> = indegree
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&k, _)| std::cmp::Reverse((self.nodes[k].ordinal, k)))
            .collect();
        let mut out = Vec::with_capacity(self.nodes.len());
        while let Some(std::cmp::Reverse((_, id))) = ready.pop() {
            out.push(id.to_owned());
            for e in self.edges.values().filter(|e| e.from == id) {
                let d = indegree.get_mut(e.to.as_str()).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.push(std::cmp::Reverse((self.nodes[&e.to].ordinal, e.to.as_str())));
                }
            }
        }
        debug_assert_eq!(out.len(), self.nodes.len(), "graph has a cycle");
        out
    }

    /// Whether the graph is a DAG. Only used to check the invariant.
    pub fn is_acyclic(&self) -> bool {
        let mut indegree: HashMap<&str, usize> = self.nodes.keys().map(|k| (k.as_str(), 0)).collect();
        for e in self.edges.values() {
            *indegree.entry(e.to.as_str()).or_default() += 1;
        }
        let mut ready: Vec<&str> = indegree.iter().filter(|(_, &d)| d == 0).map(|(&k, _)| k).collect();
        let mut visited = 0;
        while let Some(n) = ready.pop() {
            visited += 1;
            for e in self.edges.values().filter(|e| e.from == n) {
                let d = indegree.get_mut(e.to.as_str()).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.push(e.to.as_str());
                }
            }
        }
        visited == indegree.len()
    }
}
