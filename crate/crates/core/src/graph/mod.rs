//! The workspace dataflow graph: node and edge types, port legality,
//! acyclicity and deterministic recomputation.

mod compute;
mod state;

pub use compute::{compute_node, Cancelled, ComputedOutput, EngineContext, NodeError, NodeOutput};
pub use state::{GraphState, Node};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::operators::RankConfig;
use crate::projection::ProjectionConfig;

pub type NodeId = String;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    Document,
    Search,
    Group,
    Note,
    Rank,
    Projection,
    Union,
    Intersection,
    Difference,
}

impl NodeKind {
    pub const ALL: [NodeKind; 9] = [
        NodeKind::Document,
        NodeKind::Search,
        NodeKind::Group,
        NodeKind::Note,
        NodeKind::Rank,
        NodeKind::Projection,
        NodeKind::Union,
        NodeKind::Intersection,
        NodeKind::Difference,
    ];

    /// Whether the node's output is a document list usable as a source.
    pub fn produces_documents(self) -> bool {
        !matches!(self, NodeKind::Note)
    }

    pub fn is_set_op(self) -> bool {
        matches!(self, NodeKind::Union | NodeKind::Intersection | NodeKind::Difference)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Port {
    Source,
    Control,
}

/// Edge legality. Sources flow into Rank, Projection and set operations;
/// Documents, Groups and Notes steer a Rank; only Groups steer a
/// Projection.
pub fn port_allowed(from: NodeKind, to: NodeKind, port: Port) -> bool {
    use NodeKind::*;
    match port {
        Port::Source => {
            from.produces_documents() && matches!(to, Rank | Projection | Union | Intersection | Difference)
        }
        Port::Control => matches!(
            (from, to),
            (Document | Group | Note, Rank) | (Group, Projection)
        ),
    }
}

/// Kind-specific node configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "config")]
pub enum NodeConfig {
    Document { doc_id: String },
    Search { query: String },
    Group { label: String, members: Vec<String> },
    Note { text: String },
    Rank(RankConfig),
    Projection(ProjectionConfig),
    Union {},
    Intersection {},
    Difference { left: Option<NodeId> },
}

impl NodeConfig {
    pub fn kind(&self) -> NodeKind {
        match self {
            NodeConfig::Document { .. } => NodeKind::Document,
            NodeConfig::Search { .. } => NodeKind::Search,
            NodeConfig::Group { .. } => NodeKind::Group,
            NodeConfig::Note { .. } => NodeKind::Note,
            NodeConfig::Rank(_) => NodeKind::Rank,
            NodeConfig::Projection(_) => NodeKind::Projection,
            NodeConfig::Union {} => NodeKind::Union,
            NodeConfig::Intersection {} => NodeKind::Intersection,
            NodeConfig::Difference { .. } => NodeKind::Difference,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub edge_id: String,
    pub from: NodeId,
    pub to: NodeId,
    pub port: Port,
}

impl Edge {
    /// Numeric part of an `e<n>` edge id.
    pub fn number(edge_id: &str) -> Option<u64> {
        edge_id.strip_prefix('e')?.parse().ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub doc_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl ScoredDoc {
    pub fn plain(doc_id: impl Into<String>) -> Self {
        ScoredDoc {
            doc_id: doc_id.into(),
            score: None,
        }
    }
}

pub type DocList = Vec<ScoredDoc>;

/// Which node produced an output, and the log position of the last event
/// that affected its inputs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Stamp {
    pub node_id: NodeId,
    pub seq: u64,
}

/// The output every node produces: an ordered list of ordered document
/// lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocListsOutput {
    pub lists: Vec<DocList>,
    /// Set when the final list holds unclustered (noise) documents.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub noise: bool,
    pub stamp: Stamp,
}

impl DocListsOutput {
    /// All document ids, first occurrence order, duplicates removed.
    pub fn flattened(&self) -> Vec<String> {
        let mut seen = std::collections::HashSet::new();
        self.lists
            .iter()
            .flatten()
            .filter(|d| seen.insert(d.doc_id.as_str()))
            .map(|d| d.doc_id.clone())
            .collect()
    }

    pub fn total_entries(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }
}

/// Errors raised by workspace mutations.
#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "error", content = "message")]
pub enum EngineError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("edge would create a cycle")]
    WouldCycle,
    #[error("illegal port: {0}")]
    IllegalPort(String),
    #[error("duplicate edge")]
    DuplicateEdge,
    #[error("not found: {0}")]
    NotFound(String),
    #[error("document {0} is already a member")]
    AlreadyMember(String),
    #[error("node id {0} already exists")]
    DuplicateNode(String),
    #[error("nothing to undo")]
    NothingToUndo,
    #[error("nothing to redo")]
    NothingToRedo,
    #[error("storage failure: {0}")]
    StorageFailure(String),
}

impl EngineError {
    /// Stable machine-readable name of the variant.
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::InvalidConfig(_) => "InvalidConfig",
            EngineError::WouldCycle => "WouldCycle",
            EngineError::IllegalPort(_) => "IllegalPort",
            EngineError::DuplicateEdge => "DuplicateEdge",
            EngineError::NotFound(_) => "NotFound",
            EngineError::AlreadyMember(_) => "AlreadyMember",
            EngineError::DuplicateNode(_) => "DuplicateNode",
            EngineError::NothingToUndo => "NothingToUndo",
            EngineError::NothingToRedo => "NothingToRedo",
            EngineError::StorageFailure(_) => "StorageFailure",
        }
    }
}
