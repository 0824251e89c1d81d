//! Browser demo over a synthetic corpus with planted themes.
//!
//! One small graph backs the page: a Search node, a Group of picked
//! archetypes, a Rank fed by both, and a 2-D Projection of the search
//! results that keeps the picked documents together. Every call returns a
//! JSON string; failures come back as `{"error", "message"}`.

use std::sync::Arc;

use curate_core::corpus::Corpus;
use curate_core::embedding::HashingEmbedder;
use curate_core::graph::{EngineContext, NodeConfig, NodeOutput, Port, Position};
use curate_core::operators::RankConfig;
use curate_core::projection::ProjectionConfig;
use curate_core::synthetic::planted_themes;
use curate_core::workspace::{output_json, Command, Workspace};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const ACTOR: &str = "demo";
const SEARCH: &str = "search";
const PICKED: &str = "picked";
const RANKED: &str = "ranked";
const MAP: &str = "map";
const SHOWN: usize = 50;

#[wasm_bindgen]
pub struct Demo {
    ctx: EngineContext,
    ws: Workspace,
    themes: Vec<usize>,
}

fn failure(code: &str, message: impl std::fmt::Display) -> String {
    json!({ "error": code, "message": message.to_string() }).to_string()
}

fn add(ws: &mut Workspace, corpus: &Corpus, id: &str, config: NodeConfig, x: f64) {
    let cmd = Command::AddNode {
        node_id: Some(id.into()),
        config,
        position: Position { x, y: 0.0 },
    };
    ws.apply(cmd, ACTOR, 0, corpus).expect("demo graph is valid");
}

fn link(ws: &mut Workspace, corpus: &Corpus, from: &str, to: &str, port: Port) {
    let cmd = Command::AddEdge {
        from: from.into(),
        to: to.into(),
        port,
    };
    ws.apply(cmd, ACTOR, 0, corpus).expect("demo graph is valid");
}

#[wasm_bindgen]
impl Demo {
    /// `themes × per_theme` documents drawn from disjoint word pools.
    #[wasm_bindgen(constructor)]
    pub fn new(themes: usize, per_theme: usize, seed: u64) -> Demo {
        let planted = planted_themes(themes.clamp(1, 26), per_theme.clamp(2, 200), seed);
        let ctx = EngineContext::embed(planted.to_corpus("demo"), Arc::new(HashingEmbedder::default()))
            .expect("hashing embedder never fails");
        let corpus = &ctx.corpus;
        let mut ws = Workspace::new("demo", "demo", seed);
        let first_word = planted.bodies[0].split(' ').next().unwrap_or("a").to_owned();
        add(&mut ws, corpus, SEARCH, NodeConfig::Search { query: first_word }, 0.0);
        let group = NodeConfig::Group {
            label: "picked".into(),
            members: Vec::new(),
        };
        add(&mut ws, corpus, PICKED, group, 0.0);
        add(&mut ws, corpus, RANKED, NodeConfig::Rank(RankConfig::default()), 200.0);
        let layout = ProjectionConfig {
            target_dims: 2,
            min_cluster_size: 5,
            ..ProjectionConfig::default()
        };
        add(&mut ws, corpus, MAP, NodeConfig::Projection(layout), 200.0);
        link(&mut ws, corpus, SEARCH, RANKED, Port::Source);
        link(&mut ws, corpus, PICKED, RANKED, Port::Control);
        link(&mut ws, corpus, SEARCH, MAP, Port::Source);
        link(&mut ws, corpus, PICKED, MAP, Port::Control);
        Demo {
            ctx,
            ws,
            themes: planted.labels,
        }
    }

    /// Every document with its planted theme.
    pub fn documents(&self) -> String {
        let docs: Vec<Value> = self
            .ctx
            .corpus
            .iter()
            .enumerate()
            .map(|(i, d)| json!({ "doc_id": d.doc_id, "text": d.body, "theme": self.themes[i] }))
            .collect();
        Value::Array(docs).to_string()
    }

    /// Runs a boolean query. Returns the match count and the first matches.
    pub fn search(&mut self, query: &str) -> String {
        let cmd = Command::UpdateConfig {
            node_id: SEARCH.into(),
            config: NodeConfig::Search { query: query.into() },
        };
        if let Err(e) = self.ws.apply(cmd, ACTOR, 0, &self.ctx.corpus) {
            return failure(e.code(), e);
        }
        self.ws.recompute(&self.ctx);
        self.listing(SEARCH)
    }

    /// Sets the archetypes (comma separated ids) and ranks the current
    /// search results by similarity to them.
    pub fn rank(&mut self, archetypes: &str, max_results: usize) -> String {
        let members: Vec<String> = archetypes
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect();
        let cmds = [
            Command::UpdateConfig {
                node_id: PICKED.into(),
                config: NodeConfig::Group {
                    label: "picked".into(),
                    members,
                },
            },
            Command::UpdateConfig {
                node_id: RANKED.into(),
                config: NodeConfig::Rank(RankConfig {
                    max_results: max_results.max(1),
                    similarity_floor: -1.0,
                }),
            },
        ];
        for cmd in cmds {
            if let Err(e) = self.ws.apply(cmd, ACTOR, 0, &self.ctx.corpus) {
                return failure(e.code(), e);
            }
        }
        self.ws.recompute(&self.ctx);
        self.listing(RANKED)
    }

    /// Lays the search results out in 2-D and clusters them. Picked
    /// archetypes are kept in one cluster.
    pub fn project(&mut self, seed: u64) -> String {
        if let Err(e) = self.ws.apply(Command::SetSeed { seed }, ACTOR, 0, &self.ctx.corpus) {
            return failure(e.code(), e);
        }
        self.ws.recompute(&self.ctx);
        let out = match self.ws.output(MAP) {
            Some(NodeOutput::Ready(c)) => c.clone(),
            Some(other) => return output_json(other).to_string(),
            None => return failure("NotFound", "projection has no output"),
        };
        let lists = &out.output.lists;
        let cluster_of = |doc_id: &str| {
            lists
                .iter()
                .position(|l| l.iter().any(|d| d.doc_id == doc_id))
                .filter(|&i| !(out.output.noise && i + 1 == lists.len()))
        };
        let points: Vec<Value> = out
            .coordinates
            .as_ref()
            .map(|c| {
                c.points
                    .iter()
                    .enumerate()
                    .map(|(row, &pos)| {
                        let doc_id = &self.ctx.corpus.doc_at(pos).doc_id;
                        json!({
                            "doc_id": doc_id,
                            "x": c.values[row * c.dims],
                            "y": c.values[row * c.dims + 1],
                            "cluster": cluster_of(doc_id),
                            "theme": self.themes[pos],
                        })
                    })
                    .collect()
            })
            .unwrap_or_default();
        let clusters = lists.len() - usize::from(out.output.noise);
        json!({ "clusters": clusters, "points": points, "warnings": out.warnings }).to_string()
    }
}

impl Demo {
    fn listing(&self, node_id: &str) -> String {
        let Some(out) = self.ws.output(node_id) else {
            return failure("NotFound", format!("{node_id} has no output"));
        };
        let Some(ready) = out.ready() else {
            return output_json(out).to_string();
        };
        let all: Vec<_> = ready.output.lists.iter().flatten().collect();
        let docs: Vec<Value> = all
            .iter()
            .take(SHOWN)
            .map(|d| {
                let pos = self.ctx.corpus.position(&d.doc_id).expect("outputs name corpus documents");
                json!({ "doc_id": d.doc_id, "score": d.score, "text": self.ctx.corpus.doc_at(pos).body, "theme": self.themes[pos] })
            })
            .collect();
        json!({ "count": all.len(), "docs": docs, "warnings": ready.warnings }).to_string()
    }
}
