//! Headless workflows: a snapshot plus the node ids to export, run to
//! completion with no server.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{EngineContext, EngineError, NodeId, NodeOutput};
use crate::provenance::ActionEvent;
use crate::workspace::{output_json, Snapshot, Workspace, SNAPSHOT_VERSION};

pub const MANIFEST_VERSION: u32 = 1;
const ACTOR: &str = "workflow";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowFile {
    #[serde(flatten)]
    pub snapshot: Snapshot,
    pub outputs: Vec<NodeId>,
}

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("{at}: {error}")]
    Engine { at: String, error: EngineError },
    #[error("node {node_id} failed: {code}: {message}")]
    NodeFailed {
        node_id: NodeId,
        code: String,
        message: String,
    },
    #[error("output directory {0} is not empty; pass --force to overwrite")]
    OutputExists(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl WorkflowError {
    pub fn code(&self) -> &'static str {
        match self {
            WorkflowError::Schema(_) => "SchemaError",
            WorkflowError::Engine { error, .. } => error.code(),
            WorkflowError::NodeFailed { .. } => "NodeFailed",
            WorkflowError::OutputExists(_) => "OutputExists",
            WorkflowError::Io(_) => "Io",
        }
    }
}

impl WorkflowFile {
    pub fn from_json(s: &str) -> Result<Self, WorkflowError> {
        let wf: WorkflowFile = serde_json::from_str(s).map_err(|e| WorkflowError::Schema(e.to_string()))?;
        if wf.snapshot.version != SNAPSHOT_VERSION {
            return Err(WorkflowError::Schema(format!(
                "version {} is not supported (expected {SNAPSHOT_VERSION})",
                wf.snapshot.version
            )));
        }
        for id in &wf.outputs {
            if !wf.snapshot.nodes.iter().any(|n| &n.node_id == id) {
                return Err(WorkflowError::Schema(format!("output {id} names no node")));
            }
        }
        Ok(wf)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub node_id: NodeId,
    pub file: String,
    pub sha256: String,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub workspace_id: String,
    pub seed: u64,
    pub provider_id: String,
    pub corpus_id: String,
    pub corpus_hash: String,
    pub outputs: Vec<OutputEntry>,
    /// The log that rebuilds the graph, header first.
    pub events: Vec<serde_json::Value>,
    /// The only field that differs between identical runs.
    pub wall_time_ms: u64,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifests serialize") + "\n"
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the workflow's seed.
    pub seed: Option<u64>,
    /// Also write each output as CSV.
    pub csv: bool,
}

/// Files produced by a run, in write order.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub files: Vec<(String, Vec<u8>)>,
    pub manifest: Manifest,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn lists_csv(out: &crate::graph::DocListsOutput) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["list", "rank", "doc_id", "score", "noise"]).expect("in-memory write");
    let last = out.lists.len().saturating_sub(1);
    for (li, list) in out.lists.iter().enumerate() {
        for (ri, d) in list.iter().enumerate() {
            let score = d.score.map(|s| s.to_string()).unwrap_or_default();
            let noise = (out.noise && li == last).to_string();
            w.write_record([li.to_string(), ri.to_string(), d.doc_id.clone(), score, noise])
                .expect("in-memory write");
        }
    }
    w.into_inner().expect("in-memory flush")
}

/// Builds the graph, computes every node and renders the requested
/// outputs and the manifest.
pub fn run(wf: &WorkflowFile, ctx: &EngineContext, opts: &RunOptions) -> Result<RunResult, WorkflowError> {
    let started = Instant::now();
    let mut snapshot = wf.snapshot.clone();
    if let Some(seed) = opts.seed {
        snapshot.seed = seed;
    }
    let mut ws =
        Workspace::from_snapshot(&snapshot, &ctx.corpus, ACTOR, 0).map_err(|(at, error)| WorkflowError::Engine { at, error })?;
    ws.recompute(ctx);

    let mut files = Vec::new();
    let mut entries = Vec::new();
    for id in &wf.outputs {
        let out = ws.output(id).ok_or_else(|| WorkflowError::Schema(format!("output {id} names no node")))?;
        let ready = match out {
            NodeOutput::Ready(c) => c,
            NodeOutput::Failed { error, .. } => {
                return Err(WorkflowError::NodeFailed {
                    node_id: id.clone(),
                    code: error.code.clone(),
                    message: error.message.clone(),
                })
            }
            NodeOutput::Blocked { upstream, .. } => {
                return Err(WorkflowError::NodeFailed {
                    node_id: id.clone(),
                    code: "Blocked".into(),
                    message: format!("blocked by failing node {upstream}"),
                })
            }
        };
        let json = serde_json::to_string_pretty(&output_json(out)).expect("outputs serialize") + "\n";
        let mut push = |name: String, bytes: Vec<u8>| {
            entries.push(OutputEntry {
                node_id: id.clone(),
                file: name.clone(),
                sha256: sha256_hex(&bytes),
            });
            files.push((name, bytes));
        };
        push(format!("{id}.json"), json.into_bytes());
        if opts.csv {
            push(format!("{id}.csv"), lists_csv(&ready.output));
            if let Some(coords) = &ready.coordinates {
                let csv = coords.to_csv(|p| ctx.corpus.doc_at(p).doc_id.as_str());
                push(format!("{id}.coords.csv"), csv.into_bytes());
            }
        }
    }

    let manifest = Manifest {
        version: MANIFEST_VERSION,
        workspace_id: ws.workspace_id().to_owned(),
        seed: ws.seed(),
        provider_id: ctx.provider.provider_id().to_owned(),
        corpus_id: ctx.corpus.corpus_id().to_owned(),
        corpus_hash: ctx.corpus.content_hash(),
        outputs: entries,
        events: ws.events().iter().map(ActionEvent::to_value).collect(),
        wall_time_ms: started.elapsed().as_millis() as u64,
    };
    Ok(RunResult { files, manifest })
}

/// Writes a run's files and `manifest.json` into `out_dir`, refusing a
/// non-empty directory unless `force` is set.
pub fn write_run(result: &RunResult, out_dir: &Path, force: bool) -> Result<(), WorkflowError> {
    if !force && out_dir.read_dir().is_ok_and(|mut d| d.next().is_some()) {
        return Err(WorkflowError::OutputExists(out_dir.display().to_string()));
    }
    std::fs::create_dir_all(out_dir)?;
    for (name, bytes) in &result.files {
        std::fs::write(out_dir.join(name), bytes)?;
    }
    std::fs::write(out_dir.join("manifest.json"), result.manifest.to_json())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::embedding::HashingEmbedder;
    use crate::synthetic::planted_themes;

    fn ctx() -> EngineContext {
        EngineContext::embed(planted_themes(3, 20, 2).to_corpus("c"), Arc::new(HashingEmbedder::default())).unwrap()
    }

    const FLOW: &str = r#"{
      "version": 1,
      "workspace_id": "flow",
      "seed": 7,
      "nodes": [
        {"node_id": "s", "kind": "Search", "config": {"query": "aka OR ako"}},
        {"node_id": "g", "kind": "Group", "config": {"label": "picked", "members": ["p0000", "p0001"]}},
        {"node_id": "r", "kind": "Rank", "config": {"max_results": 5, "similarity_floor": -1.0}}
      ],
      "edges": [
        {"from": "g", "to": "r", "port": "control"},
        {"from": "s", "to": "r", "port": "source"}
      ],
      "outputs": ["r"]
    }"#;

    #[test]
    fn runs_are_identical_except_wall_time() {
        let ctx = ctx();
        let wf = WorkflowFile::from_json(FLOW).unwrap();
        let opts = RunOptions { csv: true, ..Default::default() };
        let a = run(&wf, &ctx, &opts).unwrap();
        let b = run(&wf, &ctx, &opts).unwrap();
        assert_eq!(a.files, b.files);
        let mut ma = a.manifest.clone();
        ma.wall_time_ms = b.manifest.wall_time_ms;
        assert_eq!(ma.to_json(), b.manifest.to_json());
        assert_eq!(a.files.len(), 2);
        assert_eq!(a.manifest.events.len(), 6);
        let v: serde_json::Value = serde_json::from_slice(&a.files[0].1).unwrap();
        assert!(v["lists"][0].as_array().unwrap().len() <= 5);
    }

    #[test]
    fn unknown_output_is_a_schema_error() {
        let bad = FLOW.replace("\"outputs\": [\"r\"]", "\"outputs\": [\"zz\"]");
        assert!(matches!(WorkflowFile::from_json(&bad), Err(WorkflowError::Schema(_))));
        let old = FLOW.replace("\"version\": 1", "\"version\": 9");
        assert!(matches!(WorkflowFile::from_json(&old), Err(WorkflowError::Schema(_))));
    }

    #[test]
    fn engine_errors_name_the_node() {
        let bad = FLOW.replace("p0001", "missing");
        let wf = WorkflowFile::from_json(&bad).unwrap();
        let err = run(&wf, &ctx(), &RunOptions::default()).unwrap_err();
        assert_eq!(err.code(), "NotFound");
        assert!(err.to_string().starts_with("node g:"));
    }

    #[test]
    fn output_dir_is_not_overwritten() {
        let dir = tempfile::tempdir().unwrap();
        let wf = WorkflowFile::from_json(FLOW).unwrap();
        let res = run(&wf, &ctx(), &RunOptions::default()).unwrap();
        write_run(&res, dir.path(), false).unwrap();
        assert!(dir.path().join("r.json").exists());
        assert!(matches!(write_run(&res, dir.path(), false), Err(WorkflowError::OutputExists(_))));
        write_run(&res, dir.path(), true).unwrap();
    }
}
