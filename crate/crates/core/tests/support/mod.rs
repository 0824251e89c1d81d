#![allow(dead_code)]

pub mod fuzz;
pub mod oracle;

use std::sync::Arc;

use curate_core::corpus::{Corpus, FieldMap, IngestOptions, InputFormat};
use curate_core::embedding::HashingEmbedder;
use curate_core::graph::EngineContext;

/// Random documents whose first one to three words form the title.
pub fn titled_corpus(count: usize, vocabulary: usize, seed: u64) -> Corpus {
    let mut lines = String::new();
    for (i, (id, text)) in curate_core::synthetic::random_documents(count, vocabulary, seed).into_iter().enumerate() {
        let words: Vec<&str> = text.split(' ').collect();
        let cut = (1 + i % 3).min(words.len() - 1);
        let rec = serde_json::json!({"id": id, "title": words[..cut].join(" "), "text": words[cut..].join(" ")});
        lines.push_str(&rec.to_string());
        lines.push('\n');
    }
    let map = FieldMap {
        id: Some("id".into()),
        title: Some("title".into()),
        ..FieldMap::body("text")
    };
    let mut c = Corpus::new("random", map);
    c.ingest(lines.as_bytes(), InputFormat::Jsonl, &IngestOptions::default()).unwrap();
    c
}

pub fn context(corpus: Corpus) -> EngineContext {
    EngineContext::embed(corpus, Arc::new(HashingEmbedder::default())).unwrap()
}
