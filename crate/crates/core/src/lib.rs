//! Engine for thematic curation of large text corpora.
//!
//! Documents are ingested into an immutable [`corpus::Corpus`], embedded into
//! unit vectors and indexed for boolean search. A [`workspace::Workspace`]
//! holds a dataflow graph of search, group, note, rank, projection and set
//! operation nodes whose outputs are lists of document lists. Every
//! mutation is an event in an append-only log, so any workspace state can
//! be replayed, undone and redone.

pub mod corpus;
pub mod datadir;
pub mod embedding;
pub mod graph;
pub mod operators;
pub mod projection;
pub mod provenance;
pub mod query;
pub mod synthetic;
pub mod workflow;
pub mod workspace;
