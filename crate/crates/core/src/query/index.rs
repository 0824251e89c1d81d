use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::QueryError;
use crate::corpus::{Corpus, Document};
use crate::embedding::tokenize;

const MAGIC: &[u8; 4] = b"TELI";
pub const INDEX_FORMAT_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Posting {
    /// Document position in ingest order.
    pub doc: u32,
    pub positions: Vec<u32>,
}

/// Token -> postings over title and body. Postings are sorted by ingest
/// order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InvertedIndex {
    postings: BTreeMap<String, Vec<Posting>>,
    doc_ids: Vec<String>,
}

/// Token stream of a document: title tokens, then body tokens starting one
/// position after the title so that phrases never straddle the boundary.
pub(crate) fn document_tokens(doc: &Document) -> Vec<(u32, String)> {
    let title = tokenize(&doc.title);
    let offset = if title.is_empty() { 0 } else { title.len() as u32 + 1 };
    let mut out: Vec<(u32, String)> = title.into_iter().enumerate().map(|(i, t)| (i as u32, t)).collect();
    out.extend(
        tokenize(&doc.body)
            .into_iter()
            .enumerate()
            .map(|(i, t)| (offset + i as u32, t)),
    );
    out
}

impl InvertedIndex {
    pub fn build(corpus: &Corpus) -> Self {
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        for (doc_pos, doc) in corpus.iter().enumerate() {
            let mut local: BTreeMap<String, Vec<u32>> = BTreeMap::new();
            for (pos, tok) in document_tokens(doc) {
                local.entry(tok).or_default().push(pos);
            }
            for (tok, positions) in local {
                postings.entry(tok).or_default().push(Posting {
                    doc: doc_pos as u32,
                    positions,
                });
            }
        }
        InvertedIndex {
            postings,
            doc_ids: corpus.iter().map(|d| d.doc_id.clone()).collect(),
        }
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn token_count(&self) -> usize {
        self.postings.len()
    }

    pub fn postings(&self, token: &str) -> &[Posting] {
        self.postings.get(token).map(Vec::as_slice).unwrap_or(&[])
    }

    pub(crate) fn prefixed<'a>(&'a self, stem: &'a str) -> impl Iterator<Item = (&'a String, &'a Vec<Posting>)> + 'a {
        self.postings
            .range::<str, _>((std::ops::Bound::Included(stem), std::ops::Bound::Unbounded))
            .take_while(move |(t, _)| t.starts_with(stem))
    }

    pub(crate) fn tokens(&self) -> impl Iterator<Item = &String> {
        self.postings.keys()
    }

    pub fn doc_id(&self, doc: u32) -> &str {
        &self.doc_ids[doc as usize]
    }

    /// Serializes the index; see `docs/formats.md`.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.push(INDEX_FORMAT_VERSION);
        put_varint(&mut buf, self.doc_ids.len() as u64);
        put_varint(&mut buf, self.postings.len() as u64);
        for (tok, list) in &self.postings {
            put_varint(&mut buf, tok.len() as u64);
            buf.extend_from_slice(tok.as_bytes());
            put_varint(&mut buf, list.len() as u64);
            let mut prev_doc = 0u32;
            for p in list {
                put_varint(&mut buf, (p.doc - prev_doc) as u64);
                prev_doc = p.doc;
                put_varint(&mut buf, p.positions.len() as u64);
                let mut prev_pos = 0u32;
                for &pos in &p.positions {
                    put_varint(&mut buf, (pos - prev_pos) as u64);
                    prev_pos = pos;
                }
            }
            if buf.len() > 1 << 20 {
                w.write_all(&buf)?;
                buf.clear();
            }
        }
        w.write_all(&buf)?;
        w.flush()
    }

    /// Reads an index written for `corpus`.
    pub fn read_from<R: Read>(mut r: R, corpus: &Corpus) -> Result<Self, QueryError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| QueryError::Format(e.to_string()))?;
        let mut cur = Cursor { bytes: &bytes, at: 0 };
        if cur.take(4)? != MAGIC {
            return Err(QueryError::Format("bad magic".into()));
        }
        let version = cur.take(1)?[0];
        if version != INDEX_FORMAT_VERSION {
            return Err(QueryError::Format(format!("unsupported format version {version}")));
        }
        let doc_count = cur.varint()? as usize;
        if doc_count != corpus.len() {
            return Err(QueryError::Format(format!(
                "index covers {doc_count} documents, corpus has {}",
                corpus.len()
            )));
        }
        let tokens = cur.varint()?;
        let mut postings = BTreeMap::new();
        for _ in 0..tokens {
            let len = cur.varint()? as usize;
            let tok = std::str::from_utf8(cur.take(len)?)
                .map_err(|e| QueryError::Format(e.to_string()))?
                .to_owned();
            let n = cur.varint()?;
            let mut list = Vec::with_capacity(n as usize);
            let mut doc = 0u64;
            for _ in 0..n {
                doc += cur.varint()?;
                if doc >= doc_count as u64 {
                    return Err(QueryError::Format("posting beyond document count".into()));
                }
                let npos = cur.varint()?;
                let mut positions = Vec::with_capacity(npos as usize);
                let mut pos = 0u64;
                for _ in 0..npos {
                    pos += cur.varint()?;
                    positions.push(pos as u32);
                }
                list.push(Posting {
                    doc: doc as u32,
                    positions,
                });
            }
            postings.insert(tok, list);
        }
        if cur.at != bytes.len() {
            return Err(QueryError::Format("trailing bytes".into()));
        }
        Ok(InvertedIndex {
            postings,
            doc_ids: corpus.iter().map(|d| d.doc_id.clone()).collect(),
        })
    }
}

fn put_varint(buf: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        buf.push((v as u8) | 0x80);
        v >>= 7;
    }
    buf.push(v as u8);
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], QueryError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| QueryError::Format("truncated index".into()))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn varint(&mut self) -> Result<u64, QueryError> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let b = self.take(1)?[0];
            v |= ((b & 0x7f) as u64) << shift;
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(QueryError::Format("varint overflow".into()))
    }
}
