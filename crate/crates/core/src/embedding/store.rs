use std::io::{Read, Write};

use super::similarity::dot_exact;
use super::{EmbedError, EmbeddingProvider, Vector};

const MAGIC: &[u8; 4] = b"TELV";

/// One vector per corpus document, addressed by the document's position in
/// ingest order.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorStore {
    dim: usize,
    provider_id: String,
    data: Vec<f32>,
}

impl VectorStore {
    pub fn new(dim: usize, provider_id: impl Into<String>) -> Self {
        VectorStore {
            dim,
            provider_id: provider_id.into(),
            data: Vec::new(),
        }
    }

    /// Embeds `texts` in batches of `batch` and stores them in order.
    pub fn build<'a, I>(provider: &dyn EmbeddingProvider, texts: I, batch: usize) -> Result<Self, EmbedError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut store = VectorStore::new(provider.dim(), provider.provider_id());
        let mut pending: Vec<&str> = Vec::with_capacity(batch);
        let flush = |pending: &mut Vec<&str>, store: &mut VectorStore| -> Result<(), EmbedError> {
            for v in provider.embed_batch(pending)? {
                store.push(&v)?;
            }
            pending.clear();
            Ok(())
        };
        for t in texts {
            pending.push(t);
            if pending.len() >= batch.max(1) {
                flush(&mut pending, &mut store)?;
            }
        }
        if !pending.is_empty() {
            flush(&mut pending, &mut store)?;
        }
        Ok(store)
    }

    pub fn push(&mut self, v: &Vector) -> Result<(), EmbedError> {
        if v.dim() != self.dim {
            return Err(EmbedError::DimMismatch {
                expected: self.dim,
                actual: v.dim(),
            });
        }
        self.data.extend_from_slice(v.as_slice());
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, idx: usize) -> &[f32] {
        &self.data[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn vector(&self, idx: usize) -> Vector {
        Vector::from_unit(self.get(idx).to_vec())
    }

    /// Dot product of the stored vector `idx` with `target`.
    pub fn score(&self, idx: usize, target: &Vector) -> f64 {
        dot_exact(self.get(idx), target.as_slice())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), EmbedError> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for idx in 0..self.len() {
            w.write_all(&(idx as u32).to_le_bytes())?;
            for c in self.get(idx) {
                w.write_all(&c.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a vector file. Records may appear in any order but every
    /// document reference in `0..count` must appear exactly once.
    pub fn read_from<R: Read>(mut r: R, provider_id: impl Into<String>) -> Result<Self, EmbedError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(EmbedError::Format("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let dim = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8)?;
        let count = u64::from_le_bytes(b8) as usize;
        if dim == 0 {
            return Err(EmbedError::Format("zero dimension".into()));
        }
        let mut data = vec![0f32; dim * count];
        let mut seen = vec![false; count];
        for _ in 0..count {
            r.read_exact(&mut b4)
                .map_err(|e| EmbedError::Format(format!("truncated record: {e}")))?;
            let idx = u32::from_le_bytes(b4) as usize;
            if idx >= count || seen[idx] {
                return Err(EmbedError::Format(format!("bad document reference {idx}")));
            }
            seen[idx] = true;
            for c in &mut data[idx * dim..(idx + 1) * dim] {
                r.read_exact(&mut b4)
                    .map_err(|e| EmbedError::Format(format!("truncated record: {e}")))?;
                *c = f32::from_le_bytes(b4);
            }
        }
        Ok(VectorStore {
            dim,
            provider_id: provider_id.into(),
            data,
        })
    }
}
