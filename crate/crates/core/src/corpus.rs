//! Immutable document storage: ingest, lookup, export and the on-disk
//! corpus directory.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::embedding::fnv1a64;

pub const META_FILE: &str = "corpus.meta";
pub const DOCS_FILE: &str = "docs.jsonl";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("duplicate document id {doc_id:?} (record {line})")]
    DuplicateId { doc_id: String, line: usize },
    #[error("record {line} is missing field {field:?}")]
    MissingField { field: String, line: usize },
    #[error("record {line} has an empty body")]
    EmptyBody { line: usize },
    #[error("malformed record {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("document not found: {0}")]
    NotFound(String),
    #[error("corpus directory: {0}")]
    Storage(String),
}

impl From<std::io::Error> for CorpusError {
    fn from(e: std::io::Error) -> Self {
        CorpusError::Storage(e.to_string())
    }
}

/// Which input columns feed a document's fields. Fixed when the corpus is
/// created.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldMap {
    /// Column holding the document id. When absent, ids are derived from a
    /// 64-bit hash of title and body.
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub title: Option<String>,
    pub body: String,
    /// Columns copied into metadata under their own names.
    #[serde(default)]
    pub metadata: Vec<String>,
    /// Column holding a flat object whose entries are merged into metadata.
    #[serde(default)]
    pub metadata_object: Option<String>,
}

impl FieldMap {
    pub fn body(field: impl Into<String>) -> Self {
        FieldMap {
            id: None,
            title: None,
            body: field.into(),
            metadata: Vec::new(),
            metadata_object: None,
        }
    }

    /// The layout written by [`Corpus::export_docs`] in JSON form.
    pub fn canonical() -> Self {
        FieldMap {
            id: Some("doc_id".into()),
            title: Some("title".into()),
            body: "body".into(),
            metadata: Vec::new(),
            metadata_object: Some("metadata".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    pub body: String,
    pub metadata: BTreeMap<String, String>,
    pub ingest_seq: u64,
}

impl Document {
    /// Text handed to the embedder and the index: title and body joined by
    /// a single space.
    pub fn full_text(&self) -> String {
        if self.title.is_empty() {
            self.body.clone()
        } else {
            format!("{} {}", self.title, self.body)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    /// One JSON object per line.
    Jsonl,
    /// CSV with a header row.
    Csv,
    /// A JSON array of objects, as produced by a JSON export.
    Json,
}

impl InputFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "jsonl" | "ndjson" => Some(InputFormat::Jsonl),
            "csv" => Some(InputFormat::Csv),
            "json" => Some(InputFormat::Json),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Json,
    Csv,
}

pub type Record = Map<String, Value>;

#[derive(Default)]
pub struct IngestOptions<'a> {
    /// Skip and count bad records instead of failing the whole ingest.
    pub lenient: bool,
    /// Records for which this returns false are dropped before mapping.
    pub filter: Option<&'a dyn Fn(&Record) -> bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub count: usize,
    pub skipped: usize,
    pub filtered: usize,
    pub first_id: Option<String>,
    pub last_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub corpus_id: String,
    pub count: usize,
    pub field_map: FieldMap,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    corpus_id: String,
    field_map: FieldMap,
    docs: Vec<Document>,
    by_id: HashMap<String, usize>,
}

fn scalar_string(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        other => Some(other.to_string()),
    }
}

impl Corpus {
    pub fn new(corpus_id: impl Into<String>, field_map: FieldMap) -> Self {
        Corpus {
            corpus_id: corpus_id.into(),
            field_map,
            docs: Vec::new(),
            by_id: HashMap::new(),
        }
    }

    pub fn corpus_id(&self) -> &str {
        &self.corpus_id
    }

    pub fn field_map(&self) -> &FieldMap {
        &self.field_map
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn meta(&self) -> CorpusMeta {
        CorpusMeta {
            corpus_id: self.corpus_id.clone(),
            count: self.docs.len(),
            field_map: self.field_map.clone(),
        }
    }

    pub fn get_document(&self, doc_id: &str) -> Result<&Document, CorpusError> {
        self.by_id
            .get(doc_id)
            .map(|&i| &self.docs[i])
            .ok_or_else(|| CorpusError::NotFound(doc_id.to_owned()))
    }

    /// Position of a document in ingest order.
    pub fn position(&self, doc_id: &str) -> Option<usize> {
        self.by_id.get(doc_id).copied()
    }

    pub fn doc_at(&self, position: usize) -> &Document {
        &self.docs[position]
    }

    /// Documents in ingest order.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = &Document> {
        self.docs.iter()
    }

    fn map_record(&self, rec: &Record, line: usize) -> Result<(String, String, String, BTreeMap<String, String>), CorpusError> {
        let fm = &self.field_map;
        let body = rec
            .get(&fm.body)
            .and_then(scalar_string)
            .ok_or_else(|| CorpusError::MissingField {
                field: fm.body.clone(),
                line,
            })?;
        if body.trim().is_empty() {
            return Err(CorpusError::EmptyBody { line });
        }
        let title = match &fm.title {
            Some(f) => rec.get(f).and_then(scalar_string).unwrap_or_default(),
            None => String::new(),
        };
        let mut metadata = BTreeMap::new();
        if let Some(f) = &fm.metadata_object {
            match rec.get(f) {
                None | Some(Value::Null) => {}
                Some(Value::Object(obj)) => {
                    for (k, v) in obj {
                        if let Some(s) = scalar_string(v) {
                            metadata.insert(k.clone(), s);
                        }
                    }
                }
                Some(_) => {
                    return Err(CorpusError::MalformedRecord {
                        line,
                        message: format!("field {f:?} is not an object"),
                    })
                }
            }
        }
        for f in &fm.metadata {
            if let Some(s) = rec.get(f).and_then(scalar_string) {
                metadata.insert(f.clone(), s);
            }
        }
        let doc_id = match &fm.id {
            Some(f) => rec
                .get(f)
                .and_then(scalar_string)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| CorpusError::MissingField {
                    field: f.clone(),
                    line,
                })?,
            None => {
                let mut bytes = Vec::with_capacity(title.len() + body.len() + 1);
                bytes.extend_from_slice(title.as_bytes());
                bytes.push(0x1f);
                bytes.extend_from_slice(body.as_bytes());
                format!("{:016x}", fnv1a64(&bytes))
            }
        };
        Ok((doc_id, title, body, metadata))
    }

    /// Ingests a stream of records. The ingest is all-or-nothing: on error
    /// no record of this call is stored.
    pub fn ingest<R: Read>(&mut self, input: R, format: InputFormat, opts: &IngestOptions) -> Result<IngestSummary, CorpusError> {
        let mut summary = IngestSummary::default();
        let mut staged: Vec<Document> = Vec::new();
        let mut staged_ids: HashMap<String, usize> = HashMap::new();
        let next_seq = self.docs.len() as u64;

        let mut accept = |rec: Result<Record, CorpusError>, line: usize, summary: &mut IngestSummary| -> Result<(), CorpusError> {
            let rec = match rec {
                Ok(r) => r,
                Err(_) if opts.lenient => {
                    summary.skipped += 1;
                    return Ok(());
                }
                Err(e) => return Err(e),
            };
            if let Some(filter) = opts.filter {
                if !filter(&rec) {
                    summary.filtered += 1;
                    return Ok(());
                }
            }
            let (doc_id, title, body, metadata) = match self.map_record(&rec, line) {
                Ok(m) => m,
                Err(CorpusError::MissingField { .. } | CorpusError::EmptyBody { .. } | CorpusError::MalformedRecord { .. })
                    if opts.lenient =>
                {
                    summary.skipped += 1;
                    return Ok(());
                }
                Err(e) => return Err(e),
            };
            if self.by_id.contains_key(&doc_id) || staged_ids.contains_key(&doc_id) {
                return Err(CorpusError::DuplicateId { doc_id, line });
            }
            staged_ids.insert(doc_id.clone(), staged.len());
            staged.push(Document {
                doc_id,
                title,
                body,
                metadata,
                ingest_seq: next_seq + staged.len() as u64,
            });
            Ok(())
        };

        match format {
            InputFormat::Jsonl => {
                let reader = BufReader::new(input);
                for (i, line) in reader.lines().enumerate() {
                    let line_no = i + 1;
                    let line = line.map_err(|e| CorpusError::MalformedRecord {
                        line: line_no,
                        message: e.to_string(),
                    });
                    let rec = line.and_then(|l| {
                        if l.trim().is_empty() {
                            return Ok(None);
                        }
                        match serde_json::from_str::<Value>(&l) {
                            Ok(Value::Object(m)) => Ok(Some(m)),
                            Ok(_) => Err(CorpusError::MalformedRecord {
                                line: line_no,
                                message: "not a JSON object".into(),
                            }),
                            Err(e) => Err(CorpusError::MalformedRecord {
                                line: line_no,
                                message: e.to_string(),
                            }),
                        }
                    });
                    match rec {
                        Ok(None) => continue,
                        Ok(Some(r)) => accept(Ok(r), line_no, &mut summary)?,
                        Err(e) => accept(Err(e), line_no, &mut summary)?,
                    }
                }
            }
            InputFormat::Csv => {
                let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
                let headers = reader
                    .headers()
                    .map_err(|e| CorpusError::MalformedRecord {
                        line: 1,
                        message: e.to_string(),
                    })?
                    .clone();
                for (i, row) in reader.records().enumerate() {
                    let rec = row
                        .map(|row| {
                            headers
                                .iter()
                                .zip(row.iter())
                                .map(|(h, v)| (h.to_owned(), Value::String(v.to_owned())))
                                .collect::<Record>()
                        })
                        .map_err(|e| CorpusError::MalformedRecord {
                            line: i + 2,
                            message: e.to_string(),
                        });
                    accept(rec, i + 2, &mut summary)?;
                }
            }
            InputFormat::Json => {
                let value: Value = serde_json::from_reader(input).map_err(|e| CorpusError::MalformedRecord {
                    line: 1,
                    message: e.to_string(),
                })?;
                let Value::Array(items) = value else {
                    return Err(CorpusError::MalformedRecord {
                        line: 1,
                        message: "expected a JSON array".into(),
                    });
                };
                for (i, item) in items.into_iter().enumerate() {
                    let rec = match item {
                        Value::Object(m) => Ok(m),
                        _ => Err(CorpusError::MalformedRecord {
                            line: i + 1,
                            message: "not a JSON object".into(),
                        }),
                    };
                    accept(rec, i + 1, &mut summary)?;
                }
            }
        }

        summary.count = staged.len();
        summary.first_id = staged.first().map(|d| d.doc_id.clone());
        summary.last_id = staged.last().map(|d| d.doc_id.clone());
        for doc in staged {
            self.by_id.insert(doc.doc_id.clone(), self.docs.len());
            self.docs.push(doc);
        }
        Ok(summary)
    }

    /// Serializes the given documents in the order requested. Nothing is
    /// produced if any id is unknown.
    pub fn export_docs<S: AsRef<str>>(&self, doc_ids: &[S], format: ExportFormat) -> Result<Vec<u8>, CorpusError> {
        let docs = doc_ids
            .iter()
            .map(|id| self.get_document(id.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(match format {
            ExportFormat::Json => export_json(&docs),
            ExportFormat::Csv => export_csv(&docs)?,
        })
    }

    /// SHA-256 over the JSON export of the whole corpus, hex encoded.
    pub fn content_hash(&self) -> String {
        let docs: Vec<&Document> = self.docs.iter().collect();
        let digest = Sha256::digest(export_json(&docs));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Writes the corpus directory. Documents already present in
    /// `docs.jsonl` are left untouched; only newer ones are appended.
    pub fn persist(&self, dir: &Path) -> Result<(), CorpusError> {
        fs::create_dir_all(dir)?;
        let docs_path = dir.join(DOCS_FILE);
        let existing = if docs_path.exists() {
            BufReader::new(File::open(&docs_path)?).lines().count()
        } else {
            0
        };
        if existing > self.docs.len() {
            return Err(CorpusError::Storage(format!(
                "{} holds {existing} records but the corpus has {}",
                docs_path.display(),
                self.docs.len()
            )));
        }
        let file = OpenOptions::new().create(true).append(true).open(&docs_path)?;
        let mut w = BufWriter::new(file);
        for doc in &self.docs[existing..] {
            serde_json::to_writer(&mut w, doc).map_err(|e| CorpusError::Storage(e.to_string()))?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        w.get_ref().sync_data()?;
        let tmp = dir.join(format!("{META_FILE}.tmp"));
        fs::write(&tmp, serde_json::to_vec(&self.meta()).map_err(|e| CorpusError::Storage(e.to_string()))?)?;
        fs::rename(tmp, dir.join(META_FILE))?;
        Ok(())
    }

    pub fn open(dir: &Path) -> Result<Self, CorpusError> {
        let meta: CorpusMeta = serde_json::from_slice(&fs::read(dir.join(META_FILE))?)
            .map_err(|e| CorpusError::Storage(format!("{META_FILE}: {e}")))?;
        let mut corpus = Corpus::new(meta.corpus_id.clone(), meta.field_map.clone());
        let reader = BufReader::new(File::open(dir.join(DOCS_FILE))?);
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let doc: Document = serde_json::from_str(&line)
                .map_err(|e| CorpusError::Storage(format!("{DOCS_FILE} line {}: {e}", i + 1)))?;
            if doc.ingest_seq != corpus.docs.len() as u64 || corpus.by_id.contains_key(&doc.doc_id) {
                return Err(CorpusError::Storage(format!("{DOCS_FILE} line {}: out of order or duplicate", i + 1)));
            }
            corpus.by_id.insert(doc.doc_id.clone(), corpus.docs.len());
            corpus.docs.push(doc);
        }
        if corpus.docs.len() != meta.count {
            return Err(CorpusError::Storage(format!(
                "{META_FILE} declares {} documents, {DOCS_FILE} holds {}",
                meta.count,
                corpus.docs.len()
            )));
        }
        Ok(corpus)
    }
}

#[derive(Serialize)]
struct ExportRecord<'a> {
    doc_id: &'a str,
    title: &'a str,
    body: &'a str,
    metadata: &'a BTreeMap<String, String>,
}

fn export_json(docs: &[&Document]) -> Vec<u8> {
    let records: Vec<ExportRecord> = docs
        .iter()
        .map(|d| ExportRecord {
            doc_id: &d.doc_id,
            title: &d.title,
            body: &d.body,
            metadata: &d.metadata,
        })
        .collect();
    serde_json::to_vec(&records).expect("string maps always serialize")
}

fn export_csv(docs: &[&Document]) -> Result<Vec<u8>, CorpusError> {
    let keys: BTreeSet<&str> = docs.iter().flat_map(|d| d.metadata.keys().map(String::as_str)).collect();
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    let storage = |e: csv::Error| CorpusError::Storage(e.to_string());
    let mut header = vec!["doc_id", "title", "body"];
    header.extend(keys.iter().copied());
    w.write_record(&header).map_err(storage)?;
    for d in docs {
        let mut row = vec![d.doc_id.as_str(), d.title.as_str(), d.body.as_str()];
        row.extend(keys.iter().map(|k| d.metadata.get(*k).map(String::as_str).unwrap_or("")));
        w.write_record(&row).map_err(storage)?;
    }
    w.into_inner().map_err(|e| CorpusError::Storage(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fm() -> FieldMap {
        FieldMap {
            id: Some("id".into()),
            title: Some("title".into()),
            body: "selftext".into(),
            metadata: vec!["score".into()],
            metadata_object: None,
        }
    }

    const THREE: &str = r#"{"id":"d1","title":"WIBTA","selftext":"wifi bill","score":3}
{"id":"d2","title":"AITA","selftext":"netflix password"}
{"id":"d3","title":"","selftext":"wifi password","score":"12"}
"#;

    fn three() -> Corpus {
        let mut c = Corpus::new("c", fm());
        c.ingest(THREE.as_bytes(), InputFormat::Jsonl, &IngestOptions::default()).unwrap();
        c
    }

    #[test]
    fn ingest_three_records() {
        let mut c = Corpus::new("c", fm());
        let s = c.ingest(THREE.as_bytes(), InputFormat::Jsonl, &IngestOptions::default()).unwrap();
        assert_eq!(s.count, 3);
        assert_eq!(s.first_id.as_deref(), Some("d1"));
        assert_eq!(s.last_id.as_deref(), Some("d3"));
        let d1 = c.get_document("d1").unwrap();
        assert_eq!(d1.body, "wifi bill");
        assert_eq!(d1.metadata.get("score").map(String::as_str), Some("3"));
        assert_eq!(c.get_document("d3").unwrap().ingest_seq, 2);
        assert_eq!(c.get_document("d1").unwrap(), c.get_document("d1").unwrap());
    }

    #[test]
    fn empty_stream_is_fine() {
        let mut c = Corpus::new("c", fm());
        let s = c.ingest(&b""[..], InputFormat::Jsonl, &IngestOptions::default()).unwrap();
        assert_eq!(s.count, 0);
        assert!(c.is_empty());
    }

    #[test]
    fn unknown_document() {
        assert_eq!(three().get_document("zz"), Err(CorpusError::NotFound("zz".into())));
    }

    #[test]
    fn duplicate_ids_rejected_atomically() {
        let mut c = three();
        let again = "{\"id\":\"d9\",\"selftext\":\"new\"}\n{\"id\":\"d2\",\"selftext\":\"dup\"}\n";
        let err = c.ingest(again.as_bytes(), InputFormat::Jsonl, &IngestOptions::default()).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateId { ref doc_id, .. } if doc_id == "d2"));
        assert_eq!(c.len(), 3);
        assert!(c.get_document("d9").is_err());
    }

    #[test]
    fn missing_and_empty_body() {
        let mut c = Corpus::new("c", fm());
        let err = c
            .ingest(&b"{\"id\":\"a\",\"title\":\"t\"}\n"[..], InputFormat::Jsonl, &IngestOptions::default())
            .unwrap_err();
        assert!(matches!(err, CorpusError::MissingField { .. }));
        let err = c
            .ingest(&b"{\"id\":\"a\",\"selftext\":\"   \"}\n"[..], InputFormat::Jsonl, &IngestOptions::default())
            .unwrap_err();
        assert_eq!(err, CorpusError::EmptyBody { line: 1 });
    }

    #[test]
    fn lenient_mode_skips_malformed_lines() {
        let input = "{\"id\":\"a\",\"selftext\":\"x\"}\nnot json\n{\"id\":\"b\",\"selftext\":\"y\"}\n[1,2]\n";
        let mut strict = Corpus::new("c", fm());
        let err = strict.ingest(input.as_bytes(), InputFormat::Jsonl, &IngestOptions::default()).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedRecord { line: 2, .. }));
        let mut c = Corpus::new("c", fm());
        let s = c
            .ingest(input.as_bytes(), InputFormat::Jsonl, &IngestOptions { lenient: true, filter: None })
            .unwrap();
        assert_eq!((s.count, s.skipped), (2, 2));
    }

    #[test]
    fn filter_predicate_drops_records() {
        let removed = |r: &Record| r.get("selftext").and_then(Value::as_str) != Some("[removed]");
        let input = "{\"id\":\"a\",\"selftext\":\"x\"}\n{\"id\":\"b\",\"selftext\":\"[removed]\"}\n";
        let mut c = Corpus::new("c", fm());
        let s = c
            .ingest(input.as_bytes(), InputFormat::Jsonl, &IngestOptions { lenient: false, filter: Some(&removed) })
            .unwrap();
        assert_eq!((s.count, s.filtered), (1, 1));
    }

    #[test]
    fn derived_ids_are_content_hashes() {
        let mut c = Corpus::new("c", FieldMap::body("text"));
        c.ingest(&b"{\"text\":\"hello world\"}\n"[..], InputFormat::Jsonl, &IngestOptions::default())
            .unwrap();
        let mut bytes = vec![0x1f];
        bytes.extend_from_slice(b"hello world");
        let id = format!("{:016x}", fnv1a64(&bytes));
        assert_eq!(c.get_document(&id).unwrap().body, "hello world");
        let err = c
            .ingest(&b"{\"text\":\"hello world\"}\n"[..], InputFormat::Jsonl, &IngestOptions::default())
            .unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateId { .. }));
    }

    #[test]
    fn csv_ingest() {
        let input = "id,title,selftext,score\nd1,t,\"hello, \"\"world\"\"\",5\nd2,,second,\n";
        let mut c = Corpus::new("c", fm());
        c.ingest(input.as_bytes(), InputFormat::Csv, &IngestOptions::default()).unwrap();
        assert_eq!(c.get_document("d1").unwrap().body, "hello, \"world\"");
        assert_eq!(c.get_document("d2").unwrap().metadata.get("score").map(String::as_str), Some(""));
        let bad = "id,selftext\nd9,x,extra\n";
        assert!(matches!(
            c.ingest(bad.as_bytes(), InputFormat::Csv, &IngestOptions::default()),
            Err(CorpusError::MalformedRecord { line: 2, .. })
        ));
    }

    #[test]
    fn export_preserves_requested_order() {
        let c = three();
        let out = c.export_docs(&["d2", "d1"], ExportFormat::Json).unwrap();
        let v: Vec<Value> = serde_json::from_slice(&out).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[0]["doc_id"], "d2");
        assert_eq!(v[1]["doc_id"], "d1");
        assert_eq!(c.export_docs::<&str>(&[], ExportFormat::Json).unwrap(), b"[]");
        assert_eq!(c.export_docs::<&str>(&[], ExportFormat::Csv).unwrap(), b"doc_id,title,body\r\n");
        assert_eq!(c.export_docs(&["d1", "nope"], ExportFormat::Json), Err(CorpusError::NotFound("nope".into())));
    }

    #[test]
    fn csv_export_columns_and_quoting() {
        let c = three();
        let out = String::from_utf8(c.export_docs(&["d3", "d2"], ExportFormat::Csv).unwrap()).unwrap();
        assert_eq!(out, "doc_id,title,body,score\r\nd3,,wifi password,12\r\nd2,AITA,netflix password,\r\n");
    }

    #[test]
    fn json_export_import_export_is_stable() {
        let c = three();
        let ids: Vec<&str> = c.iter().map(|d| d.doc_id.as_str()).collect();
        let first = c.export_docs(&ids, ExportFormat::Json).unwrap();
        let mut back = Corpus::new("c2", FieldMap::canonical());
        back.ingest(&first[..], InputFormat::Json, &IngestOptions::default()).unwrap();
        for d in c.iter() {
            let b = back.get_document(&d.doc_id).unwrap();
            assert_eq!((&b.title, &b.body, &b.metadata), (&d.title, &d.body, &d.metadata));
        }
        assert_eq!(back.export_docs(&ids, ExportFormat::Json).unwrap(), first);
    }

    #[test]
    fn persist_and_open() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = three();
        c.persist(dir.path()).unwrap();
        c.ingest(&b"{\"id\":\"d4\",\"selftext\":\"more\"}\n"[..], InputFormat::Jsonl, &IngestOptions::default())
            .unwrap();
        c.persist(dir.path()).unwrap();
        let back = Corpus::open(dir.path()).unwrap();
        assert_eq!(back.len(), 4);
        assert_eq!(back.content_hash(), c.content_hash());
        let meta: Value = serde_json::from_slice(&fs::read(dir.path().join(META_FILE)).unwrap()).unwrap();
        assert_eq!(meta["count"], 4);
        assert_eq!(meta["corpus_id"], "c");
    }
}
