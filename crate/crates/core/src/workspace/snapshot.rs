use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::fold::Core;
use crate::graph::{EngineError, GraphState, NodeConfig, NodeId, Port, Position};

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotNode {
    pub node_id: NodeId,
    #[serde(flatten)]
    pub config: NodeConfig,
    #[serde(default)]
    pub position: Position,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotEdge {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_id: Option<String>,
    pub from: NodeId,
    pub to: NodeId,
    pub port: Port,
}

/// The graph without history or outputs: nodes in creation order, edges
/// in creation order. Serializes to the same bytes for the same graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    #[serde(default = "default_version")]
    pub version: u32,
    pub workspace_id: String,
    pub seed: u64,
    pub nodes: Vec<SnapshotNode>,
    pub edges: Vec<SnapshotEdge>,
}

fn default_version() -> u32 {
    SNAPSHOT_VERSION
}

impl Snapshot {
    pub fn of(workspace_id: &str, seed: u64, graph: &GraphState) -> Self {
        Snapshot {
            version: SNAPSHOT_VERSION,
            workspace_id: workspace_id.to_owned(),
            seed,
            nodes: graph
                .nodes_by_ordinal()
                .into_iter()
                .map(|n| SnapshotNode {
                    node_id: n.node_id.clone(),
                    config: n.config.clone(),
                    position: n.position,
                })
                .collect(),
            edges: graph
                .edges()
                .map(|e| SnapshotEdge {
                    edge_id: Some(e.edge_id.clone()),
                    from: e.from.clone(),
                    to: e.to.clone(),
                    port: e.port,
                })
                .collect(),
        }
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("snapshots serialize") + "\n"
    }

    pub fn from_json(s: &str) -> Result<Self, EngineError> {
        let snap: Snapshot = serde_json::from_str(s).map_err(|e| EngineError::InvalidConfig(e.to_string()))?;
        if snap.version != SNAPSHOT_VERSION {
            return Err(EngineError::InvalidConfig(format!(
                "snapshot version {} is not supported (expected {SNAPSHOT_VERSION})",
                snap.version
            )));
        }
        Ok(snap)
    }
}

/// On-disk cache of the full folded state at one seq, so reopening does
/// not replay the whole log.
#[derive(Serialize, Deserialize)]
struct StateFile {
    #[serde(flatten)]
    snapshot: Snapshot,
    state: Core,
}

fn state_path(dir: &Path, seq: u64) -> PathBuf {
    dir.join(format!("snap-{seq}.json"))
}

pub(super) fn write_state(dir: &Path, core: &Core) -> std::io::Result<()> {
    let file = StateFile {
        snapshot: Snapshot::of(&core.workspace_id, core.seed, &core.graph),
        state: core.clone(),
    };
    let tmp = dir.join(".snap.tmp");
    std::fs::write(&tmp, serde_json::to_vec(&file).map_err(std::io::Error::other)?)?;
    std::fs::rename(tmp, state_path(dir, core.last_seq))
}

/// The newest readable state file at or before `max_seq`.
pub(super) fn latest_state(dir: &Path, max_seq: u64) -> Option<Core> {
    let mut seqs: Vec<u64> = std::fs::read_dir(dir)
        .ok()?
        .filter_map(|e| {
            let name = e.ok()?.file_name().into_string().ok()?;
            name.strip_prefix("snap-")?.strip_suffix(".json")?.parse().ok()
        })
        .filter(|&s| s <= max_seq)
        .collect();
    seqs.sort_unstable();
    seqs.into_iter().rev().find_map(|s| {
        let bytes = std::fs::read(state_path(dir, s)).ok()?;
        let file: StateFile = serde_json::from_slice(&bytes).ok()?;
        (file.state.last_seq == s).then_some(file.state)
    })
}
