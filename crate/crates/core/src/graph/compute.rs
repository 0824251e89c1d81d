use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{DocListsOutput, GraphState, Node, NodeConfig, NodeId, Port, ScoredDoc, Stamp};
use crate::corpus::Corpus;
use crate::embedding::{EmbedError, EmbeddingProvider, Vector, VectorStore};
use crate::operators::{rank, set_op, OperatorError, SetOpKind};
use crate::projection::{project, Coordinates, Job, ProjectionError};
use crate::query::{execute_query, parse_query, InvertedIndex, QueryError};

/// Read-only data every node computation draws on.
#[derive(Clone)]
pub struct EngineContext {
    pub corpus: Arc<Corpus>,
    pub index: Arc<InvertedIndex>,
    pub vectors: Arc<VectorStore>,
    pub provider: Arc<dyn EmbeddingProvider>,
}

impl EngineContext {
    pub fn new(corpus: Corpus, vectors: VectorStore, provider: Arc<dyn EmbeddingProvider>) -> Self {
        let index = InvertedIndex::build(&corpus);
        Self::from_parts(corpus, index, vectors, provider)
    }

    pub fn from_parts(corpus: Corpus, index: InvertedIndex, vectors: VectorStore, provider: Arc<dyn EmbeddingProvider>) -> Self {
        EngineContext {
            corpus: Arc::new(corpus),
            index: Arc::new(index),
            vectors: Arc::new(vectors),
            provider,
        }
    }

    /// Embeds every document's full text with `provider`.
    pub fn embed(corpus: Corpus, provider: Arc<dyn EmbeddingProvider>) -> Result<Self, EmbedError> {
        let texts: Vec<String> = corpus.iter().map(|d| d.full_text()).collect();
        let vectors = VectorStore::build(provider.as_ref(), texts.iter().map(String::as_str), 512)?;
        Ok(Self::new(corpus, vectors, provider))
    }
}

/// Why a node has no output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeError {
    pub code: String,
    pub message: String,
}

impl NodeError {
    fn new(code: &str, message: impl Into<String>) -> Self {
        NodeError {
            code: code.to_owned(),
            message: message.into(),
        }
    }
}

impl From<OperatorError> for NodeError {
    fn from(e: OperatorError) -> Self {
        let code = match e {
            OperatorError::EmptyControl => "EmptyControl",
            OperatorError::DegenerateMean => "DegenerateMean",
            OperatorError::Arity(_) => "Arity",
            OperatorError::Embed(_) => "EmbeddingFailed",
        };
        NodeError::new(code, e.to_string())
    }
}

impl From<QueryError> for NodeError {
    fn from(e: QueryError) -> Self {
        let code = match e {
            QueryError::PureNegation => "PureNegation",
            _ => "QueryParse",
        };
        NodeError::new(code, e.to_string())
    }
}

/// A successful computation.
#[derive(Debug, Clone, PartialEq)]
pub struct ComputedOutput {
    pub output: DocListsOutput,
    /// Set for Note nodes.
    pub note_vector: Option<Vector>,
    /// Set for Projection nodes.
    pub coordinates: Option<Coordinates>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeOutput {
    Ready(Arc<ComputedOutput>),
    Failed { stamp: Stamp, error: NodeError },
    /// An input has no output; `upstream` is the node where the failure
    /// started.
    Blocked { stamp: Stamp, upstream: NodeId },
}

impl NodeOutput {
    pub fn stamp(&self) -> &Stamp {
        match self {
            NodeOutput::Ready(c) => &c.output.stamp,
            NodeOutput::Failed { stamp, .. } | NodeOutput::Blocked { stamp, .. } => stamp,
        }
    }

    pub fn ready(&self) -> Option<&ComputedOutput> {
        match self {
            NodeOutput::Ready(c) => Some(c),
            _ => None,
        }
    }
}

/// Returned when a running computation observed its cancel token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cancelled;

enum Fail {
    Error(NodeError),
    Blocked(NodeId),
    Cancelled,
}

impl From<NodeError> for Fail {
    fn from(e: NodeError) -> Self {
        Fail::Error(e)
    }
}

impl From<OperatorError> for Fail {
    fn from(e: OperatorError) -> Self {
        Fail::Error(e.into())
    }
}

impl From<QueryError> for Fail {
    fn from(e: QueryError) -> Self {
        Fail::Error(e.into())
    }
}

struct Inputs<'a> {
    node: &'a Node,
    graph: &'a GraphState,
    outputs: &'a HashMap<NodeId, NodeOutput>,
}

impl<'a> Inputs<'a> {
    /// Upstream outputs on `port`, in edge creation order.
    fn on(&self, port: Port) -> Result<Vec<(&'a Node, &'a ComputedOutput)>, Fail> {
        self.graph
            .inputs(&self.node.node_id)
            .into_iter()
            .filter(|e| e.port == port)
            .map(|e| {
                let up = self.graph.node(&e.from).expect("edge endpoints exist");
                match self.outputs.get(&e.from) {
                    Some(NodeOutput::Ready(c)) => Ok((up, c.as_ref())),
                    Some(NodeOutput::Blocked { upstream, .. }) => Err(Fail::Blocked(upstream.clone())),
                    _ => Err(Fail::Blocked(e.from.clone())),
                }
            })
            .collect()
    }
}

fn positions(ctx: &EngineContext, ids: &[String]) -> Vec<usize> {
    ids.iter().filter_map(|d| ctx.corpus.position(d)).collect()
}

fn one_list(ids: impl IntoIterator<Item = String>) -> Vec<Vec<ScoredDoc>> {
    vec![ids.into_iter().map(ScoredDoc::plain).collect()]
}

/// Computes one node from its inputs' outputs. `outputs` must hold every
/// upstream node.
pub fn compute_node(
    node: &Node,
    graph: &GraphState,
    outputs: &HashMap<NodeId, NodeOutput>,
    ctx: &EngineContext,
    workspace_seed: u64,
    job: &Job<'_>,
) -> Result<NodeOutput, Cancelled> {
    let stamp = Stamp {
        node_id: node.node_id.clone(),
        seq: node.dirty_seq,
    };
    let inputs = Inputs { node, graph, outputs };
    match evaluate(node, &inputs, ctx, workspace_seed, job) {
        Ok((lists, noise, note_vector, coordinates, warnings)) => Ok(NodeOutput::Ready(Arc::new(ComputedOutput {
            output: DocListsOutput { lists, noise, stamp },
            note_vector,
            coordinates,
            warnings,
        }))),
        Err(Fail::Error(error)) => Ok(NodeOutput::Failed { stamp, error }),
        Err(Fail::Blocked(upstream)) => Ok(NodeOutput::Blocked { stamp, upstream }),
        Err(Fail::Cancelled) => Err(Cancelled),
    }
}

type Evaluated = (Vec<Vec<ScoredDoc>>, bool, Option<Vector>, Option<Coordinates>, Vec<String>);

fn evaluate(
    node: &Node,
    inputs: &Inputs<'_>,
    ctx: &EngineContext,
    workspace_seed: u64,
    job: &Job<'_>,
) -> Result<Evaluated, Fail> {
    let plain = |lists| Ok((lists, false, None, None, Vec::new()));
    match &node.config {
        NodeConfig::Document { doc_id } => {
            if ctx.corpus.position(doc_id).is_none() {
                return Err(Fail::Error(NodeError::new("NotFound", format!("document {doc_id}"))));
            }
            plain(one_list([doc_id.clone()]))
        }
        NodeConfig::Search { query } => {
            let ast = parse_query(query)?;
            plain(one_list(execute_query(&ast, &ctx.index)))
        }
        NodeConfig::Group { members, .. } => plain(one_list(members.iter().cloned())),
        NodeConfig::Note { text } => {
            let v = ctx
                .provider
                .embed(text)
                .map_err(|e| NodeError::new("EmbeddingFailed", e.to_string()))?;
            Ok((Vec::new(), false, Some(v), None, Vec::new()))
        }
        NodeConfig::Rank(config) => {
            let mut controls = Vec::new();
            for (up, out) in inputs.on(Port::Control)? {
                match (&up.config, &out.note_vector) {
                    (NodeConfig::Note { .. }, Some(v)) => controls.push(v.clone()),
                    _ => controls.extend(positions(ctx, &out.output.flattened()).into_iter().map(|p| ctx.vectors.vector(p))),
                }
            }
            let sources = inputs.on(Port::Source)?;
            let candidates = if sources.is_empty() {
                None
            } else {
                let ids: Vec<String> = sources.iter().flat_map(|(_, o)| o.output.flattened()).collect();
                Some(positions(ctx, &ids))
            };
            let ranked = rank(&controls, candidates.as_deref(), config, &ctx.vectors)?;
            let list = ranked
                .into_iter()
                .map(|(p, s)| ScoredDoc {
                    doc_id: ctx.corpus.doc_at(p).doc_id.clone(),
                    score: Some(s),
                })
                .collect();
            plain(vec![list])
        }
        NodeConfig::Projection(config) => {
            let mut source = Vec::new();
            for (_, out) in inputs.on(Port::Source)? {
                source.extend(positions(ctx, &out.output.flattened()));
            }
            let groups: Vec<Vec<usize>> = inputs
                .on(Port::Control)?
                .into_iter()
                .map(|(_, out)| positions(ctx, &out.output.flattened()))
                .collect();
            let seed = config.seed.unwrap_or(workspace_seed);
            let p = match project(&source, &groups, &ctx.vectors, config, seed, job) {
                Ok(p) => p,
                Err(ProjectionError::Cancelled) => return Err(Fail::Cancelled),
                Err(e @ ProjectionError::TooFewDocs { .. }) => {
                    return Err(Fail::Error(NodeError::new("TooFewDocs", e.to_string())))
                }
                Err(e) => return Err(Fail::Error(NodeError::new("InvalidConfig", e.to_string()))),
            };
            let id = |p: usize| ctx.corpus.doc_at(p).doc_id.clone();
            let warnings = p
                .overlapping
                .iter()
                .map(|&d| format!("document {} is in several control groups; the first group keeps it", id(d)))
                .collect();
            let mut lists: Vec<Vec<ScoredDoc>> = p
                .clusters
                .iter()
                .map(|c| c.iter().map(|&d| ScoredDoc::plain(id(d))).collect())
                .collect();
            lists.push(p.noise.iter().map(|&d| ScoredDoc::plain(id(d))).collect());
            Ok((lists, true, None, Some(p.coordinates), warnings))
        }
        NodeConfig::Union {} | NodeConfig::Intersection {} | NodeConfig::Difference { .. } => {
            let sources = inputs.on(Port::Source)?;
            let mut ordered: Vec<(&NodeId, Vec<String>)> =
                sources.iter().map(|(up, o)| (&up.node_id, o.output.flattened())).collect();
            let kind = match &node.config {
                NodeConfig::Union {} => SetOpKind::Union,
                NodeConfig::Intersection {} => SetOpKind::Intersection,
                NodeConfig::Difference { left } => {
                    if let Some(left) = left {
                        let at = ordered.iter().position(|(id, _)| *id == left).ok_or_else(|| {
                            NodeError::new("InvalidConfig", format!("designated left input {left} is not connected"))
                        })?;
                        let l = ordered.remove(at);
                        ordered.insert(0, l);
                    }
                    SetOpKind::Difference
                }
                _ => unreachable!(),
            };
            let lists: Vec<Vec<String>> = ordered.into_iter().map(|(_, l)| l).collect();
            plain(one_list(set_op(kind, &lists)?))
        }
    }
}
