use super::{tokenize, EmbedError, EmbeddingProvider, Vector};

pub const DEFAULT_DIM: usize = 256;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// SplitMix64 generator (Steele, Lea & Flood).
#[derive(Debug, Clone)]
pub struct SplitMix64(u64);

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
}

/// Deterministic reference embedder: signed random projections of token
/// counts.
///
/// Each token is hashed with FNV-1a, the hash seeds a SplitMix64 stream and
/// the stream's bits (least significant first, 64 per draw) give the signs
/// of a ±1 token vector. Token vectors are summed over all occurrences and
/// the sum is normalized.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
    id: String,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIM)
    }
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashingEmbedder {
            dim,
            id: format!("hashing-splitmix64-d{dim}"),
        }
    }

    /// Integer sign-count vector before normalization.
    pub fn counts(&self, text: &str) -> Vec<i32> {
        let mut acc = vec![0i32; self.dim];
        for token in tokenize(text) {
            let mut rng = SplitMix64::new(fnv1a64(token.as_bytes()));
            let mut word = 0u64;
            for (i, slot) in acc.iter_mut().enumerate() {
                if i % 64 == 0 {
                    word = rng.next_u64();
                }
                if (word >> (i % 64)) & 1 == 1 {
                    *slot += 1;
                } else {
                    *slot -= 1;
                }
            }
        }
        acc
    }

    pub fn embed_text(&self, text: &str) -> Result<Vector, EmbedError> {
        let counts = self.counts(text);
        let norm = counts.iter().map(|&c| (c as i64) * (c as i64)).sum::<i64>();
        if norm == 0 {
            // either no tokens, or (in principle) an exact cancellation
            return Err(EmbedError::EmptyText);
        }
        let norm = (norm as f64).sqrt();
        Ok(Vector::from_unit(
            counts.iter().map(|&c| (c as f64 / norm) as f32).collect(),
        ))
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vector>, EmbedError> {
        texts.iter().map(|t| self.embed_text(t)).collect()
    }
}
