//! Random queries and workspace sessions.

use curate_core::corpus::Corpus;
use curate_core::graph::{NodeConfig, NodeKind, Port, Position};
use curate_core::operators::RankConfig;
use curate_core::projection::ProjectionConfig;
use curate_core::query::QueryAst;
use curate_core::workspace::{Command, Workspace};
use rand::seq::SliceRandom;
use rand::Rng;

/// A random query tree over `vocab`, depth-limited.
pub fn random_ast<R: Rng>(rng: &mut R, vocab: &[String], depth: usize) -> QueryAst {
    let leaf = |rng: &mut R| -> QueryAst {
        let w = vocab.choose(rng).unwrap().clone();
        match rng.gen_range(0..6) {
            0 => QueryAst::Prefix(w[..w.len().min(rng.gen_range(1..4))].to_owned()),
            1 => QueryAst::Phrase(vec![w, vocab.choose(rng).unwrap().clone()]),
            _ => QueryAst::Term(w),
        }
    };
    if depth == 0 || rng.gen_bool(0.35) {
        return leaf(rng);
    }
    match rng.gen_range(0..5) {
        0 | 1 => QueryAst::And((0..rng.gen_range(2..4)).map(|_| random_ast(rng, vocab, depth - 1)).collect()),
        2 | 3 => QueryAst::Or((0..rng.gen_range(2..4)).map(|_| random_ast(rng, vocab, depth - 1)).collect()),
        _ => QueryAst::Not(Box::new(random_ast(rng, vocab, depth - 1))),
    }
}

/// Query text that parses back to a tree with the same matches.
pub fn render(ast: &QueryAst) -> String {
    match ast {
        QueryAst::Term(t) => t.clone(),
        QueryAst::Prefix(p) => format!("{p}*"),
        QueryAst::Phrase(ws) => format!("\"{}\"", ws.join(" ")),
        QueryAst::And(cs) => format!("({})", cs.iter().map(render).collect::<Vec<_>>().join(" AND ")),
        QueryAst::Or(cs) => format!("({})", cs.iter().map(render).collect::<Vec<_>>().join(" OR ")),
        QueryAst::Not(x) => format!("NOT {}", render(x)),
    }
}

/// Most frequent tokens of a corpus first.
pub fn vocabulary(corpus: &Corpus, limit: usize) -> Vec<String> {
    let mut counts = std::collections::HashMap::<String, usize>::new();
    for d in corpus.iter() {
        for t in curate_core::embedding::tokenize(&d.full_text()) {
            *counts.entry(t).or_default() += 1;
        }
    }
    let mut v: Vec<(String, usize)> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    v.into_iter().take(limit).map(|(w, _)| w).collect()
}

pub struct SessionGen<'a> {
    pub doc_ids: Vec<String>,
    pub words: Vec<String>,
    pub corpus: &'a Corpus,
}

impl<'a> SessionGen<'a> {
    pub fn new(corpus: &'a Corpus) -> Self {
        SessionGen {
            doc_ids: corpus.iter().map(|d| d.doc_id.clone()).collect(),
            words: vocabulary(corpus, 30),
            corpus,
        }
    }

    fn config<R: Rng>(&self, rng: &mut R, kind: NodeKind, ws: &Workspace) -> NodeConfig {
        match kind {
            NodeKind::Document => NodeConfig::Document {
                doc_id: self.doc_ids.choose(rng).unwrap().clone(),
            },
            NodeKind::Search => {
                let a = self.words.choose(rng).unwrap();
                let b = self.words.choose(rng).unwrap();
                let query = match rng.gen_range(0..3) {
                    0 => a.clone(),
                    1 => format!("{a} OR {b}"),
                    _ => format!("{a} NOT {b}"),
                };
                NodeConfig::Search { query }
            }
            NodeKind::Group => {
                let count = rng.gen_range(0..5);
                let members: Vec<String> = self.doc_ids.choose_multiple(rng, count).cloned().collect();
                NodeConfig::Group {
                    label: format!("g{}", rng.gen_range(0..100)),
                    members,
                }
            }
            NodeKind::Note => NodeConfig::Note {
                text: self.words.choose_multiple(rng, 3).cloned().collect::<Vec<_>>().join(" "),
            },
            NodeKind::Rank => NodeConfig::Rank(RankConfig {
                max_results: rng.gen_range(1..40),
                similarity_floor: if rng.gen_bool(0.5) { -1.0 } else { rng.gen_range(-0.2..0.5) },
            }),
            NodeKind::Projection => NodeConfig::Projection(ProjectionConfig {
                n_neighbors: rng.gen_range(3..8),
                epochs: rng.gen_range(5..40),
                min_cluster_size: rng.gen_range(3..8),
                seed: if rng.gen_bool(0.5) { None } else { Some(rng.gen()) },
                ..Default::default()
            }),
            NodeKind::Union => NodeConfig::Union {},
            NodeKind::Intersection => NodeConfig::Intersection {},
            NodeKind::Difference => NodeConfig::Difference {
                left: if rng.gen_bool(0.5) {
                    None
                } else {
                    ws.graph().nodes().map(|n| n.node_id.clone()).collect::<Vec<_>>().choose(rng).cloned()
                },
            },
        }
    }

    /// A random command, valid or not.
    pub fn command<R: Rng>(&self, rng: &mut R, ws: &Workspace) -> Command {
        let nodes: Vec<String> = ws.graph().nodes().map(|n| n.node_id.clone()).collect();
        let edges: Vec<String> = ws.graph().edges().map(|e| e.edge_id.clone()).collect();
        let pick = |rng: &mut R| nodes.choose(rng).cloned().unwrap_or_else(|| "n1".into());
        match rng.gen_range(0..100) {
            0..=24 => {
                let kind = *NodeKind::ALL.choose(rng).unwrap();
                Command::AddNode {
                    node_id: None,
                    config: self.config(rng, kind, ws),
                    position: Position {
                        x: rng.gen_range(-500.0..500.0),
                        y: rng.gen_range(-500.0..500.0),
                    },
                }
            }
            25..=29 => Command::RemoveNode { node_id: pick(rng) },
            30..=37 => {
                let id = pick(rng);
                let kind = ws.graph().node(&id).map_or(NodeKind::Union, |n| n.kind());
                Command::UpdateConfig {
                    config: self.config(rng, kind, ws),
                    node_id: id,
                }
            }
            38..=47 => Command::MoveNode {
                node_id: pick(rng),
                position: Position {
                    x: rng.gen_range(-500.0..500.0),
                    y: rng.gen_range(-500.0..500.0),
                },
            },
            48..=67 => Command::AddEdge {
                from: pick(rng),
                to: pick(rng),
                port: if rng.gen_bool(0.6) { Port::Source } else { Port::Control },
            },
            68..=72 => Command::RemoveEdge {
                edge_id: edges.choose(rng).cloned().unwrap_or_else(|| "e1".into()),
            },
            73..=79 => Command::AddGroupMember {
                node_id: pick(rng),
                doc_id: self.doc_ids.choose(rng).unwrap().clone(),
            },
            80..=83 => {
                let id = pick(rng);
                let doc_id = match ws.graph().node(&id).map(|n| &n.config) {
                    Some(NodeConfig::Group { members, .. }) if !members.is_empty() => members.choose(rng).unwrap().clone(),
                    _ => self.doc_ids.choose(rng).unwrap().clone(),
                };
                Command::RemoveGroupMember { node_id: id, doc_id }
            }
            84..=86 => Command::SetSeed { seed: rng.gen_range(0..4) },
            87..=94 => Command::Undo,
            _ => Command::Redo,
        }
    }

    /// Applies random commands until `events` events have been logged.
    /// Returns the number of rejected commands.
    pub fn drive<R: Rng>(&self, rng: &mut R, ws: &mut Workspace, events: u64, ts: &mut u64) -> usize {
        let target = ws.last_seq() + events;
        let mut rejected = 0;
        while ws.last_seq() < target {
            let cmd = self.command(rng, ws);
            *ts += rng.gen_range(0..3000);
            if ws.apply(cmd, "fuzz", *ts, self.corpus).is_err() {
                rejected += 1;
            }
        }
        rejected
    }
}
