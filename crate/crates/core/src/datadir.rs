//! On-disk layout of a data directory shared by the server and the CLI.
//!
//! ```text
//! <root>/corpora/<corpus_id>/corpus.meta
//!                           /docs.jsonl
//!                           /index.bin
//!                           /vectors.telv
//!                           /vectors.meta
//! <root>/workspaces/<workspace_id>/log.jsonl
//!                                 /snap-<seq>.json
//! ```

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, META_FILE};
use crate::embedding::{EmbedError, EmbeddingProvider, VectorStore};
use crate::graph::EngineContext;
use crate::query::{InvertedIndex, QueryError};

pub const INDEX_FILE: &str = "index.bin";
pub const VECTORS_FILE: &str = "vectors.telv";
pub const VECTORS_META: &str = "vectors.meta";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("index: {0}")]
    Index(#[from] QueryError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("corpus {0:?} does not exist")]
    NoCorpus(String),
    #[error("corpus {corpus_id:?} has no vectors from provider {provider_id:?}; run embed first")]
    NotEmbedded { corpus_id: String, provider_id: String },
    #[error("{0}")]
    Stale(String),
}

/// Sidecar describing `vectors.telv`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VectorsMeta {
    pub provider_id: String,
    pub dim: usize,
    pub count: usize,
    pub corpus_hash: String,
}

#[derive(Debug, Clone)]
pub struct DataDir {
    root: PathBuf,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && !id.starts_with('.')
}

fn list(dir: &Path) -> Vec<String> {
    let mut out: Vec<String> = fs::read_dir(dir)
        .into_iter()
        .flatten()
        .flatten()
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| valid_id(n))
        .collect();
    out.sort();
    out
}

fn write_atomic(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    let mut w = BufWriter::new(File::create(&tmp)?);
    write(&mut w)?;
    w.flush()?;
    w.get_ref().sync_all()?;
    fs::rename(tmp, path)
}

impl DataDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DataDir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Ids become directory names, so only `[A-Za-z0-9._-]` is allowed.
    pub fn valid_id(id: &str) -> bool {
        valid_id(id)
    }

    pub fn corpus_dir(&self, corpus_id: &str) -> PathBuf {
        self.root.join("corpora").join(corpus_id)
    }

    pub fn workspace_dir(&self, workspace_id: &str) -> PathBuf {
        self.root.join("workspaces").join(workspace_id)
    }

    pub fn corpus_exists(&self, corpus_id: &str) -> bool {
        valid_id(corpus_id) && self.corpus_dir(corpus_id).join(META_FILE).is_file()
    }

    pub fn corpus_ids(&self) -> Vec<String> {
        list(&self.root.join("corpora"))
    }

    pub fn workspace_ids(&self) -> Vec<String> {
        list(&self.root.join("workspaces"))
    }

    pub fn open_corpus(&self, corpus_id: &str) -> Result<Corpus, StoreError> {
        if !self.corpus_exists(corpus_id) {
            return Err(StoreError::NoCorpus(corpus_id.to_owned()));
        }
        Ok(Corpus::open(&self.corpus_dir(corpus_id))?)
    }

    pub fn write_index(&self, corpus_id: &str, index: &InvertedIndex) -> Result<(), StoreError> {
        write_atomic(&self.corpus_dir(corpus_id).join(INDEX_FILE), |w| index.write_to(w))?;
        Ok(())
    }

    /// The persisted index, or `None` when none has been written.
    pub fn read_index(&self, corpus: &Corpus) -> Result<Option<InvertedIndex>, StoreError> {
        let path = self.corpus_dir(corpus.corpus_id()).join(INDEX_FILE);
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(InvertedIndex::read_from(BufReader::new(File::open(path)?), corpus)?))
    }

    pub fn write_vectors(&self, corpus: &Corpus, vectors: &VectorStore) -> Result<VectorsMeta, StoreError> {
        let dir = self.corpus_dir(corpus.corpus_id());
        let meta = VectorsMeta {
            provider_id: vectors.provider_id().to_owned(),
            dim: vectors.dim(),
            count: vectors.len(),
            corpus_hash: corpus.content_hash(),
        };
        write_atomic(&dir.join(VECTORS_FILE), |w| {
            vectors.write_to(w).map_err(|e| std::io::Error::other(e.to_string()))
        })?;
        let json = serde_json::to_vec_pretty(&meta).expect("meta serializes");
        write_atomic(&dir.join(VECTORS_META), |w| w.write_all(&json))?;
        Ok(meta)
    }

    pub fn read_vectors_meta(&self, corpus_id: &str) -> Option<VectorsMeta> {
        let bytes = fs::read(self.corpus_dir(corpus_id).join(VECTORS_META)).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    /// Persisted vectors for `corpus` from `provider_id`. `None` when the
    /// corpus was never embedded by that provider.
    pub fn read_vectors(&self, corpus: &Corpus, provider_id: &str) -> Result<Option<VectorStore>, StoreError> {
        let Some(meta) = self.read_vectors_meta(corpus.corpus_id()) else {
            return Ok(None);
        };
        if meta.provider_id != provider_id {
            return Ok(None);
        }
        if meta.count != corpus.len() {
            return Err(StoreError::Stale(format!(
                "{VECTORS_FILE} holds {} vectors but the corpus has {} documents; run embed again",
                meta.count,
                corpus.len()
            )));
        }
        let path = self.corpus_dir(corpus.corpus_id()).join(VECTORS_FILE);
        let store = VectorStore::read_from(BufReader::new(File::open(path)?), meta.provider_id)?;
        if store.len() != corpus.len() || store.dim() != meta.dim {
            return Err(StoreError::Stale(format!("{VECTORS_FILE} does not match {VECTORS_META}")));
        }
        Ok(Some(store))
    }

    /// Persisted vectors from `provider_id` that cover a prefix of the
    /// corpus, as left behind when documents were ingested after the last
    /// embed.
    pub fn read_vectors_prefix(&self, corpus: &Corpus, provider_id: &str) -> Result<Option<VectorStore>, StoreError> {
        let Some(meta) = self.read_vectors_meta(corpus.corpus_id()) else {
            return Ok(None);
        };
        if meta.provider_id != provider_id || meta.count > corpus.len() {
            return Ok(None);
        }
        let path = self.corpus_dir(corpus.corpus_id()).join(VECTORS_FILE);
        let store = VectorStore::read_from(BufReader::new(File::open(path)?), meta.provider_id)?;
        Ok((store.len() == meta.count && store.dim() == meta.dim).then_some(store))
    }

    /// Embeds whatever documents `vectors` does not cover yet and persists
    /// the result.
    pub fn embed(
        &self,
        corpus: &Corpus,
        provider: &dyn EmbeddingProvider,
        existing: Option<VectorStore>,
    ) -> Result<VectorStore, StoreError> {
        let mut store = match existing {
            Some(s) if s.provider_id() == provider.provider_id() && s.len() <= corpus.len() => s,
            _ => VectorStore::new(provider.dim(), provider.provider_id()),
        };
        let texts: Vec<String> = corpus.iter().skip(store.len()).map(|d| d.full_text()).collect();
        let fresh = VectorStore::build(provider, texts.iter().map(String::as_str), 512)?;
        for i in 0..fresh.len() {
            store.push(&fresh.vector(i))?;
        }
        self.write_vectors(corpus, &store)?;
        Ok(store)
    }

    /// Everything needed to compute node outputs over a corpus. The index
    /// is rebuilt when missing. With `embed_missing`, absent vectors are
    /// computed and written; otherwise they are an error.
    pub fn load_context(
        &self,
        corpus_id: &str,
        provider: Arc<dyn EmbeddingProvider>,
        embed_missing: bool,
    ) -> Result<EngineContext, StoreError> {
        let corpus = self.open_corpus(corpus_id)?;
        let index = match self.read_index(&corpus) {
            Ok(Some(ix)) => ix,
            Ok(None) | Err(StoreError::Index(_)) => {
                let ix = InvertedIndex::build(&corpus);
                self.write_index(corpus_id, &ix)?;
                ix
            }
            Err(e) => return Err(e),
        };
        let vectors = match self.read_vectors(&corpus, provider.provider_id()) {
            Ok(Some(v)) => v,
            Ok(None) | Err(StoreError::Stale(_)) if embed_missing => self.embed(&corpus, provider.as_ref(), None)?,
            Ok(None) => {
                return Err(StoreError::NotEmbedded {
                    corpus_id: corpus_id.to_owned(),
                    provider_id: provider.provider_id().to_owned(),
                })
            }
            Err(e) => return Err(e),
        };
        Ok(EngineContext::from_parts(corpus, index, vectors, provider))
    }
}
