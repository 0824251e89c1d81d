//! Rank, note vectorization and set operations.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{mean_vector, EmbedError, EmbeddingProvider, Vector, VectorStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankConfig {
    pub max_results: usize,
    /// Scores below this are dropped. -1 disables the floor.
    pub similarity_floor: f64,
}

impl Default for RankConfig {
    fn default() -> Self {
        RankConfig {
            max_results: 1000,
            similarity_floor: -1.0,
        }
    }
}

impl RankConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_results == 0 {
            return Err("max_results must be at least 1".into());
        }
        if !(-1.0..=1.0).contains(&self.similarity_floor) {
            return Err("similarity_floor must lie in [-1, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("rank has no control vectors")]
    EmptyControl,
    #[error("mean of control vectors is degenerate")]
    DegenerateMean,
    #[error("{0}")]
    Arity(String),
    #[error(transparent)]
    Embed(EmbedError),
}

impl From<EmbedError> for OperatorError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::EmptyControl => OperatorError::EmptyControl,
            EmbedError::DegenerateMean { .. } => OperatorError::DegenerateMean,
            other => OperatorError::Embed(other),
        }
    }
}

/// Total order used by rank: score descending, then ingest position
/// ascending.
fn rank_order(a: &(usize, f64), b: &(usize, f64)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Orders candidate documents by similarity to the mean of `controls`.
///
/// `candidates` are positions in ingest order; `None` ranks every stored
/// vector. Returns `(position, score)` pairs, best first, truncated at
/// `max_results` and the similarity floor.
pub fn rank(
    controls: &[Vector],
    candidates: Option<&[usize]>,
    config: &RankConfig,
    vectors: &VectorStore,
) -> Result<Vec<(usize, f64)>, OperatorError> {
    if controls.is_empty() {
        return Err(OperatorError::EmptyControl);
    }
    let target = mean_vector(controls)?;
    if target.dim() != vectors.dim() {
        return Err(EmbedError::DimMismatch {
            expected: vectors.dim(),
            actual: target.dim(),
        }
        .into());
    }
    let positions: Vec<usize> = match candidates {
        Some(c) => {
            let mut seen = HashSet::with_capacity(c.len());
            c.iter().copied().filter(|p| seen.insert(*p)).collect()
        }
        None => (0..vectors.len()).collect(),
    };
    let mut scored = score_all(&positions, &target, vectors);
    if config.similarity_floor > -1.0 {
        scored.retain(|&(_, s)| s >= config.similarity_floor);
    }
    let k = config.max_results.min(scored.len());
    if k < scored.len() {
        scored.select_nth_unstable_by(k, rank_order);
        scored.truncate(k);
    }
    scored.sort_unstable_by(rank_order);
    Ok(scored)
}

#[cfg(feature = "parallel")]
fn score_all(positions: &[usize], target: &Vector, vectors: &VectorStore) -> Vec<(usize, f64)> {
    use rayon::prelude::*;
    positions.par_iter().map(|&p| (p, vectors.score(p, target))).collect()
}

#[cfg(not(feature = "parallel"))]
fn score_all(positions: &[usize], target: &Vector, vectors: &VectorStore) -> Vec<(usize, f64)> {
    positions.iter().map(|&p| (p, vectors.score(p, target))).collect()
}

/// Embeds a note's text with the active provider.
pub fn note_vector(text: &str, provider: &dyn EmbeddingProvider) -> Result<Vector, EmbedError> {
    provider.embed(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetOpKind {
    Union,
    Intersection,
    Difference,
}

/// Set semantics on document ids. `inputs[0]` is the first (or, for
/// difference, the left) input. Output keeps first-seen order.
pub fn set_op(kind: SetOpKind, inputs: &[Vec<String>]) -> Result<Vec<String>, OperatorError> {
    if inputs.len() < 2 {
        return Err(OperatorError::Arity(match kind {
            SetOpKind::Difference => "difference needs a left input and at least one other input".into(),
            _ => format!("{kind:?} needs at least two inputs").to_lowercase(),
        }));
    }
    let sets: Vec<HashSet<&str>> = inputs.iter().map(|l| l.iter().map(String::as_str).collect()).collect();
    let mut seen = HashSet::new();
    let out = match kind {
        SetOpKind::Union => inputs
            .iter()
            .flatten()
            .filter(|d| seen.insert(d.as_str()))
            .cloned()
            .collect(),
        SetOpKind::Intersection => inputs[0]
            .iter()
            .filter(|d| sets[1..].iter().all(|s| s.contains(d.as_str())))
            .filter(|d| seen.insert(d.as_str()))
            .cloned()
            .collect(),
        SetOpKind::Difference => inputs[0]
            .iter()
            .filter(|d| !sets[1..].iter().any(|s| s.contains(d.as_str())))
            .filter(|d| seen.insert(d.as_str()))
            .cloned()
            .collect(),
    };
    Ok(out)
}
