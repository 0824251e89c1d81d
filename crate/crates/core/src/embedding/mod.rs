//! Unit-norm text embeddings and the similarity primitives built on them.
//!
//! Every vector handed out by this module is L2-normalized. Similarity is a
//! plain dot product, evaluated with an order-independent exact accumulator
//! so that scores do not depend on summation order, chunking or threads.

mod hashing;
#[cfg(feature = "remote")]
mod remote;
mod similarity;
mod store;

pub use hashing::{fnv1a64, HashingEmbedder, SplitMix64, DEFAULT_DIM};
#[cfg(feature = "remote")]
pub use remote::{RemoteEmbedder, RetryPolicy, MAX_BATCH};
pub use similarity::{cosine, dot_naive, mean_vector};
pub use store::VectorStore;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("text contains no tokens")]
    EmptyText,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("no control vectors")]
    EmptyControl,
    #[error("mean of control vectors is degenerate (norm {norm:e})")]
    DegenerateMean { norm: f64 },
    #[error("vector has zero norm")]
    ZeroNorm,
    #[error("embedding provider unavailable after {attempts} attempts: {message}")]
    ProviderUnavailable { attempts: u32, message: String },
    #[error("malformed provider response: {0}")]
    BadResponse(String),
    #[error("vector file: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for EmbedError {
    fn from(e: std::io::Error) -> Self {
        EmbedError::Io(e.to_string())
    }
}

/// Lowercases `text` and splits it on every character outside `[a-z0-9]`.
///
/// Shared by the embedder and the inverted index so that search terms and
/// embedded tokens always agree.
pub fn tokenize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    lowered
        .split(|c: char| !(c.is_ascii_lowercase() || c.is_ascii_digit()))
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// A unit-norm embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Box<[f32]>);

impl Vector {
    /// Normalizes `components` to unit length.
    pub fn normalized(components: &[f32]) -> Result<Self, EmbedError> {
        let wide: Vec<f64> = components.iter().map(|&c| c as f64).collect();
        Self::from_f64(&wide)
    }

    /// Normalizes a f64 direction and rounds each component to f32.
    pub fn from_f64(components: &[f64]) -> Result<Self, EmbedError> {
        let norm = components.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !norm.is_finite() || norm <= 0.0 {
            return Err(EmbedError::ZeroNorm);
        }
        Ok(Vector(components.iter().map(|&c| (c / norm) as f32).collect()))
    }

    /// Wraps components that are already unit-norm (e.g. read back from a
    /// vector file). The caller vouches for the norm.
    pub(crate) fn from_unit(components: Vec<f32>) -> Self {
        Vector(components.into_boxed_slice())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&c| (c as f64) * (c as f64)).sum::<f64>().sqrt()
    }
}

impl std::ops::Neg for &Vector {
    type Output = Vector;
    fn neg(self) -> Vector {
        Vector(self.0.iter().map(|c| -c).collect())
    }
}

/// Source of document and note vectors.
pub trait EmbeddingProvider: Send + Sync {
    fn provider_id(&self) -> &str;
    fn dim(&self) -> usize;
    /// Whether identical text always yields an identical vector.
    fn deterministic(&self) -> bool;
    /// Embeds each text, preserving order. Output vectors are unit-norm.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vector>, EmbedError>;

    fn embed(&self, text: &str) -> Result<Vector, EmbedError> {
        let mut out = self.embed_batch(&[text])?;
        out.pop().ok_or_else(|| EmbedError::BadResponse("empty batch".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_splits_on_non_alnum() {
        assert_eq!(tokenize("Mom snooped, my PHONE!"), vec!["mom", "snooped", "my", "phone"]);
        assert_eq!(tokenize("e-mail x2"), vec!["e", "mail", "x2"]);
        assert!(tokenize("  ...  ").is_empty());
        // non-ascii letters are separators
        assert_eq!(tokenize("café"), vec!["caf"]);
    }

    #[test]
    fn zero_vector_cannot_be_normalized() {
        assert_eq!(Vector::normalized(&[0.0, 0.0]), Err(EmbedError::ZeroNorm));
    }
}
