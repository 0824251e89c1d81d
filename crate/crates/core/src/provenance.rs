//! Append-only action log: event encoding, durable appends and tolerant
//! reading.
//!
//! One JSON object per line:
//! `{"seq":n,"actor":...,"ts":...,"kind":...,"payload":{...}}`. Line 0 is
//! the `WorkspaceCreated` header; mutations are numbered from 1 without
//! gaps. Events produced by undo or redo carry a `cause` inside their
//! payload naming the event they invert.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::graph::{Edge, NodeConfig, NodeId, Position};

/// A node as stored in the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub node_id: NodeId,
    pub ordinal: u64,
    #[serde(flatten)]
    pub config: NodeConfig,
    pub position: Position,
}

/// What an event did. Every payload carries enough to invert it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum Change {
    WorkspaceCreated {
        workspace_id: String,
        corpus_id: String,
        seed: u64,
    },
    NodeAdded {
        node: NodeRecord,
        /// Edges restored with the node when undoing a removal.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        edges: Vec<Edge>,
    },
    NodeRemoved {
        node: NodeRecord,
        /// Incident edges, removed with the node.
        edges: Vec<Edge>,
    },
    NodeConfigChanged {
        node_id: NodeId,
        before: NodeConfig,
        after: NodeConfig,
    },
    NodeMoved {
        node_id: NodeId,
        from: Position,
        to: Position,
        /// Folded into the previous move of the same node for undo.
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        coalesce: bool,
    },
    EdgeAdded {
        edge: Edge,
    },
    EdgeRemoved {
        edge: Edge,
    },
    GroupMemberAdded {
        node_id: NodeId,
        doc_id: String,
        index: usize,
    },
    GroupMemberRemoved {
        node_id: NodeId,
        doc_id: String,
        index: usize,
    },
    SeedSet {
        before: u64,
        after: u64,
    },
}

impl Change {
    pub fn kind(&self) -> &'static str {
        match self {
            Change::WorkspaceCreated { .. } => "WorkspaceCreated",
            Change::NodeAdded { .. } => "NodeAdded",
            Change::NodeRemoved { .. } => "NodeRemoved",
            Change::NodeConfigChanged { .. } => "NodeConfigChanged",
            Change::NodeMoved { .. } => "NodeMoved",
            Change::EdgeAdded { .. } => "EdgeAdded",
            Change::EdgeRemoved { .. } => "EdgeRemoved",
            Change::GroupMemberAdded { .. } => "GroupMemberAdded",
            Change::GroupMemberRemoved { .. } => "GroupMemberRemoved",
            Change::SeedSet { .. } => "SeedSet",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Cause {
    Do,
    Undo { of: u64 },
    Redo { of: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionEvent {
    pub seq: u64,
    pub actor: String,
    /// Milliseconds since the Unix epoch. Informational only.
    pub ts: u64,
    pub change: Change,
    pub cause: Cause,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProvenanceError {
    #[error("corrupt log at seq {seq}: {reason}")]
    CorruptLog { seq: u64, reason: String },
    #[error("storage failure: {0}")]
    Storage(String),
}

impl From<std::io::Error> for ProvenanceError {
    fn from(e: std::io::Error) -> Self {
        ProvenanceError::Storage(e.to_string())
    }
}

impl ActionEvent {
    /// The event as a JSON object in log key order.
    pub fn to_value(&self) -> Value {
        let tagged = serde_json::to_value(&self.change).expect("changes serialize");
        let Value::Object(mut tagged) = tagged else {
            unreachable!("adjacently tagged enum")
        };
        let mut payload = tagged.remove("payload").unwrap_or_else(|| Value::Object(Map::new()));
        if self.cause != Cause::Do {
            if let Value::Object(p) = &mut payload {
                p.insert("cause".into(), serde_json::to_value(self.cause).expect("cause serializes"));
            }
        }
        let mut m = Map::new();
        m.insert("seq".into(), self.seq.into());
        m.insert("actor".into(), self.actor.clone().into());
        m.insert("ts".into(), self.ts.into());
        m.insert("kind".into(), tagged.remove("kind").expect("tag present"));
        m.insert("payload".into(), payload);
        Value::Object(m)
    }

    pub fn to_json(&self) -> String {
        self.to_value().to_string()
    }

    pub fn from_value(mut v: Value) -> Result<Self, String> {
        let obj = v.as_object_mut().ok_or("event is not an object")?;
        let seq = obj.get("seq").and_then(Value::as_u64).ok_or("missing seq")?;
        let actor = obj.get("actor").and_then(Value::as_str).ok_or("missing actor")?.to_owned();
        let ts = obj.get("ts").and_then(Value::as_u64).ok_or("missing ts")?;
        let kind = obj.remove("kind").ok_or("missing kind")?;
        let mut payload = obj.remove("payload").ok_or("missing payload")?;
        let cause = match payload.as_object_mut().and_then(|p| p.remove("cause")) {
            Some(c) => serde_json::from_value(c).map_err(|e| e.to_string())?,
            None => Cause::Do,
        };
        let mut tagged = Map::new();
        tagged.insert("kind".into(), kind);
        tagged.insert("payload".into(), payload);
        let change = serde_json::from_value(Value::Object(tagged)).map_err(|e| e.to_string())?;
        Ok(ActionEvent {
            seq,
            actor,
            ts,
            change,
            cause,
        })
    }

    pub fn from_json(line: &str) -> Result<Self, String> {
        Self::from_value(serde_json::from_str(line).map_err(|e| e.to_string())?)
    }
}

/// Result of reading a log: every good event up to the first damage.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRead {
    pub events: Vec<ActionEvent>,
    /// Byte length of the intact prefix.
    pub good_len: usize,
    pub damage: Option<ProvenanceError>,
}

/// Decodes log bytes, stopping at the first undecodable, torn or
/// out-of-sequence line.
pub fn parse_log(bytes: &[u8]) -> LogRead {
    let mut events: Vec<ActionEvent> = Vec::new();
    let mut at = 0;
    let corrupt = |seq: u64, reason: &str| {
        Some(ProvenanceError::CorruptLog {
            seq,
            reason: reason.to_owned(),
        })
    };
    while at < bytes.len() {
        let expected = events.len() as u64;
        let Some(nl) = bytes[at..].iter().position(|&b| b == b'\n') else {
            return LogRead {
                events,
                good_len: at,
                damage: corrupt(expected, "torn write: last line is incomplete"),
            };
        };
        let line = &bytes[at..at + nl];
        let parsed = std::str::from_utf8(line)
            .map_err(|e| e.to_string())
            .and_then(ActionEvent::from_json);
        match parsed {
            Ok(ev) if ev.seq == expected => events.push(ev),
            Ok(ev) => {
                return LogRead {
                    events,
                    good_len: at,
                    damage: corrupt(expected, &format!("expected seq {expected}, found {}", ev.seq)),
                }
            }
            Err(e) => {
                return LogRead {
                    events,
                    good_len: at,
                    damage: corrupt(expected, &e),
                }
            }
        }
        at += nl + 1;
    }
    LogRead {
        events,
        good_len: at,
        damage: None,
    }
}

pub fn read_log(path: &Path) -> Result<LogRead, ProvenanceError> {
    Ok(parse_log(&std::fs::read(path)?))
}

/// Appends events to a log file, syncing before returning.
#[derive(Debug)]
pub struct LogWriter {
    file: File,
}

impl LogWriter {
    /// Creates a new log holding only `header`.
    pub fn create(path: &Path, header: &ActionEvent) -> Result<Self, ProvenanceError> {
        let file = OpenOptions::new().write(true).create_new(true).open(path)?;
        let mut w = LogWriter { file };
        w.append(std::slice::from_ref(header))?;
        Ok(w)
    }

    /// Opens an existing log for appending after its first `good_len`
    /// bytes, discarding anything beyond them.
    pub fn open(path: &Path, good_len: usize) -> Result<Self, ProvenanceError> {
        let file = OpenOptions::new().write(true).open(path)?;
        if file.metadata()?.len() != good_len as u64 {
            file.set_len(good_len as u64)?;
            file.sync_all()?;
        }
        let mut file = file;
        use std::io::Seek;
        file.seek(std::io::SeekFrom::End(0))?;
        Ok(LogWriter { file })
    }

    pub fn append(&mut self, events: &[ActionEvent]) -> Result<(), ProvenanceError> {
        let mut buf = String::new();
        for e in events {
            buf.push_str(&e.to_json());
            buf.push('\n');
        }
        self.file.write_all(buf.as_bytes())?;
        self.file.sync_data()?;
        Ok(())
    }
}
