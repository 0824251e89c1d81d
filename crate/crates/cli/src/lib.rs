//! The `curate` command line: ingest, index and embed corpora, serve
//! workspaces, run headless workflows and export documents.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use curate_core::corpus::{Corpus, CorpusError, ExportFormat, FieldMap, IngestOptions, InputFormat};
use curate_core::datadir::{DataDir, StoreError};
use curate_core::embedding::{EmbeddingProvider, HashingEmbedder, RemoteEmbedder};
use curate_core::graph::NodeOutput;
use curate_core::query::InvertedIndex;
use curate_core::workflow::{self, RunOptions, WorkflowError, WorkflowFile};
use curate_core::workspace::Workspace;
use curate_service::{Config, ConfigError, Server};
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "curate", version, about = "Thematic curation of large text corpora")]
pub struct Cli {
    /// Root of the corpora and workspaces.
    #[arg(long, global = true, env = "TELE_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    /// Seed for layouts and clustering; overrides the workflow's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Remote embedding endpoint. Without one the built-in hashing
    /// embedder is used.
    #[arg(long, global = true, env = "TELE_PROVIDER_URL")]
    pub provider_url: Option<String>,
    /// Vector length returned by the remote endpoint.
    #[arg(long, global = true, default_value_t = 1024)]
    pub provider_dim: usize,
    /// Print failures as one JSON object on stderr.
    #[arg(long, global = true)]
    pub json_errors: bool,
    /// Allow overwriting existing output.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Add documents from a JSONL, CSV or JSON file to a corpus.
    Ingest(IngestArgs),
    /// Build the boolean search index of a corpus.
    Index(CorpusArg),
    /// Embed every document of a corpus not embedded yet.
    Embed(CorpusArg),
    /// Run the workspace server.
    Serve(ServeArgs),
    /// Build a workflow's graph, compute it and write the named outputs.
    Run(RunArgs),
    /// Write documents as JSON or CSV.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct CorpusArg {
    #[arg(long)]
    pub corpus: String,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    pub path: PathBuf,
    /// Defaults to the file name without its extension.
    #[arg(long)]
    pub corpus: Option<String>,
    /// Input format; guessed from the file extension when absent.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub id_field: Option<String>,
    #[arg(long)]
    pub title_field: Option<String>,
    #[arg(long)]
    pub body_field: Option<String>,
    /// Copied into metadata; repeatable.
    #[arg(long = "metadata-field")]
    pub metadata_fields: Vec<String>,
    /// A field holding a flat object merged into metadata.
    #[arg(long)]
    pub metadata_object: Option<String>,
    /// Skip malformed records instead of failing.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Jsonl,
    Csv,
    Json,
}

impl From<Format> for InputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Jsonl => InputFormat::Jsonl,
            Format::Csv => InputFormat::Csv,
            Format::Json => InputFormat::Json,
        }
    }
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub workflow: PathBuf,
    #[arg(long)]
    pub corpus: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write CSV files.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OutFormat {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub corpus: String,
    /// Export the output of this node of a workspace...
    #[arg(long, requires = "node", conflicts_with = "ids")]
    pub workspace: Option<String>,
    #[arg(long, requires = "workspace")]
    pub node: Option<String>,
    /// ...or these documents, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub ids: Vec<String>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: OutFormat,
    /// Destination file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A failure with a stable code for `--json-errors`.
#[derive(Debug)]
pub struct CliError {
    pub code: String,
    pub message: String,
}

impl CliError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        CliError {
            code: code.to_owned(),
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        json!({ "error": self.code, "message": self.message }).to_string()
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

fn corpus_code(e: &CorpusError) -> &'static str {
    match e {
        CorpusError::DuplicateId { .. } => "DuplicateId",
        CorpusError::MissingField { .. } => "MissingField",
        CorpusError::EmptyBody { .. } => "EmptyBody",
        CorpusError::MalformedRecord { .. } => "MalformedRecord",
        CorpusError::NotFound(_) => "NotFound",
        CorpusError::Storage(_) => "StorageFailure",
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::new(corpus_code(&e), e.to_string())
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        let code = match &e {
            StoreError::Corpus(c) => corpus_code(c),
            StoreError::Index(_) => "IndexError",
            StoreError::Embed(_) => "EmbeddingFailed",
            StoreError::Io(_) => "Io",
            StoreError::NoCorpus(_) => "NotFound",
            StoreError::NotEmbedded { .. } => "NotEmbedded",
            StoreError::Stale(_) => "Stale",
        };
        CliError::new(code, e.to_string())
    }
}

impl From<WorkflowError> for CliError {
    fn from(e: WorkflowError) -> Self {
        CliError::new(e.code(), e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::new("ConfigError", e.to_string())
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::new("Io", format!("{}: {e}", path.display()))
}

impl Cli {
    fn data(&self) -> DataDir {
        DataDir::new(self.data_dir.clone().unwrap_or_else(|| PathBuf::from("data")))
    }

    fn provider(&self) -> Arc<dyn EmbeddingProvider> {
        match &self.provider_url {
            Some(url) => Arc::new(RemoteEmbedder::new(url.clone(), self.provider_dim)),
            None => Arc::new(HashingEmbedder::default()),
        }
    }
}

/// Runs a parsed command line, writing results to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let say = |out: &mut dyn Write, line: String| {
        let _ = writeln!(out, "{line}");
        let _ = out.flush();
    };
    match &cli.command {
        Cmd::Ingest(a) => say(out, ingest(cli, a)?),
        Cmd::Index(a) => say(out, index(cli, &a.corpus)?),
        Cmd::Embed(a) => say(out, embed(cli, &a.corpus)?),
        Cmd::Run(a) => say(out, run(cli, a)?),
        Cmd::Export(a) => export(cli, a, out)?,
        Cmd::Serve(a) => serve(cli, a, out)?,
    }
    Ok(())
}

fn field_map(a: &IngestArgs) -> Option<FieldMap> {
    let any = a.id_field.is_some()
        || a.title_field.is_some()
        || a.body_field.is_some()
        || !a.metadata_fields.is_empty()
        || a.metadata_object.is_some();
    any.then(|| FieldMap {
        id: a.id_field.clone(),
        title: a.title_field.clone(),
        body: a.body_field.clone().unwrap_or_else(|| "body".into()),
        metadata: a.metadata_fields.clone(),
        metadata_object: a.metadata_object.clone(),
    })
}

fn ingest(cli: &Cli, a: &IngestArgs) -> Result<String, CliError> {
    let data = cli.data();
    let corpus_id = match &a.corpus {
        Some(c) => c.clone(),
        None => a.path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
    };
    if !DataDir::valid_id(&corpus_id) {
        return Err(CliError::new("InvalidId", format!("invalid corpus id {corpus_id:?}; pass --corpus")));
    }
    let format = match a.format {
        Some(f) => f.into(),
        None => InputFormat::from_path(&a.path).ok_or_else(|| {
            CliError::new("UnknownFormat", format!("cannot tell the format of {}; pass --format", a.path.display()))
        })?,
    };
    let wanted = field_map(a);
    let mut corpus = if data.corpus_exists(&corpus_id) {
        let c = data.open_corpus(&corpus_id)?;
        if let Some(fm) = &wanted {
            if fm != c.field_map() {
                return Err(CliError::new(
                    "FieldMapMismatch",
                    format!("corpus {} was created with a different field map", corpus_id),
                ));
            }
        }
        c
    } else {
        let fm = wanted.unwrap_or_else(|| match format {
            InputFormat::Json => FieldMap::canonical(),
            _ => FieldMap::body("body"),
        });
        Corpus::new(&corpus_id, fm)
    };
    let file = fs::File::open(&a.path).map_err(|e| io_error(&a.path, e))?;
    let opts = IngestOptions {
        lenient: a.lenient,
        filter: None,
    };
    let summary = corpus.ingest(std::io::BufReader::new(file), format, &opts)?;
    corpus.persist(&data.corpus_dir(&corpus_id))?;
    Ok(format!("ingested {} documents, skipped {}", summary.count, summary.skipped))
}

fn index(cli: &Cli, corpus_id: &str) -> Result<String, CliError> {
    let data = cli.data();
    let corpus = data.open_corpus(corpus_id)?;
    let index = InvertedIndex::build(&corpus);
    data.write_index(corpus_id, &index)?;
    Ok(format!("indexed {} documents, {} distinct tokens", index.doc_count(), index.token_count()))
}

fn embed(cli: &Cli, corpus_id: &str) -> Result<String, CliError> {
    let data = cli.data();
    let corpus = data.open_corpus(corpus_id)?;
    let provider = cli.provider();
    let existing = data.read_vectors_prefix(&corpus, provider.provider_id())?;
    let before = existing.as_ref().map_or(0, |v| v.len());
    let store = data.embed(&corpus, provider.as_ref(), existing)?;
    Ok(format!(
        "embedded {} documents ({} total) with {}",
        store.len() - before,
        store.len(),
        provider.provider_id()
    ))
}

fn run(cli: &Cli, a: &RunArgs) -> Result<String, CliError> {
    let text = fs::read_to_string(&a.workflow).map_err(|e| io_error(&a.workflow, e))?;
    let wf = WorkflowFile::from_json(&text)?;
    let ctx = cli.data().load_context(&a.corpus, cli.provider(), false)?;
    let opts = RunOptions {
        seed: cli.seed,
        csv: a.csv,
    };
    let result = workflow::run(&wf, &ctx, &opts)?;
    workflow::write_run(&result, &a.out, cli.force)?;
    Ok(format!(
        "wrote {} files and manifest.json to {}",
        result.manifest.outputs.len(),
        a.out.display()
    ))
}

fn export(cli: &Cli, a: &ExportArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let data = cli.data();
    let format = match a.format {
        OutFormat::Json => ExportFormat::Json,
        OutFormat::Csv => ExportFormat::Csv,
    };
    let (corpus, ids) = match (&a.workspace, &a.node) {
        (Some(w), Some(n)) => {
            let ctx = data.load_context(&a.corpus, cli.provider(), false)?;
            let dir = data.workspace_dir(w);
            if !dir.join("log.jsonl").is_file() {
                return Err(CliError::new("NotFound", format!("workspace {w} not found")));
            }
            let (mut ws, _) = Workspace::open(&dir).map_err(|e| CliError::new("CorruptLog", e.to_string()))?;
            if ws.corpus_id() != a.corpus {
                return Err(CliError::new(
                    "CorpusMismatch",
                    format!("workspace {w} is built on corpus {}", ws.corpus_id()),
                ));
            }
            ws.graph()
                .node(n)
                .ok_or_else(|| CliError::new("NotFound", format!("node {n} not found")))?;
            ws.recompute(&ctx);
            let ids = match ws.output(n) {
                Some(NodeOutput::Ready(c)) => c.output.flattened(),
                Some(NodeOutput::Failed { error, .. }) => {
                    return Err(CliError::new("NodeFailed", format!("node {n} failed: {}: {}", error.code, error.message)))
                }
                _ => return Err(CliError::new("NodeFailed", format!("node {n} has no output"))),
            };
            (Arc::clone(&ctx.corpus), ids)
        }
        _ => (Arc::new(data.open_corpus(&a.corpus)?), a.ids.clone()),
    };
    let bytes = corpus.export_docs(&ids, format)?;
    match &a.out {
        Some(path) => {
            if path.exists() && !cli.force {
                return Err(CliError::new(
                    "OutputExists",
                    format!("{} exists; pass --force to overwrite", path.display()),
                ));
            }
            fs::write(path, bytes).map_err(|e| io_error(path, e))
        }
        None => out.write_all(&bytes).map_err(|e| CliError::new("Io", e.to_string())),
    }
}

fn serve(cli: &Cli, a: &ServeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut config = Config::load(a.config.as_deref())?;
    if let Some(d) = &cli.data_dir {
        config.data_dir = d.clone();
    }
    if let Some(u) = &cli.provider_url {
        config.provider_url = Some(u.clone());
        config.provider_dim = cli.provider_dim;
    }
    if let Some(s) = cli.seed {
        config.default_seed = s;
    }
    if let Some(h) = &a.host {
        config.host = h.clone();
    }
    if let Some(p) = a.port {
        config.port = p;
    }
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::new("Io", e.to_string()))?;
    rt.block_on(async {
        let shutdown = shutdown_signal().map_err(|e| CliError::new("Io", e.to_string()))?;
        let server = Server::bind(config.clone())
            .await
            .map_err(|e| CliError::new("BindFailed", format!("{}: {e}", config.addr())))?;
        let addr = server.local_addr().map_err(|e| CliError::new("Io", e.to_string()))?;
        let _ = writeln!(out, "listening on {addr}");
        let _ = out.flush();
        server.run(shutdown).await.map_err(|e| CliError::new("Io", e.to_string()))
    })
}

/// Resolves on ctrl-c or SIGTERM. Handlers are installed on the call, so
/// signals arriving before the server starts are not lost.
fn shutdown_signal() -> std::io::Result<impl std::future::Future<Output = ()> + Send + 'static> {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = signal(SignalKind::terminate())?;
        let mut int = signal(SignalKind::interrupt())?;
        Ok(async move {
            tokio::select! {
                _ = int.recv() => {}
                _ = term.recv() => {}
            }
        })
    }
    #[cfg(not(unix))]
    {
        Ok(async {
            let _ = tokio::signal::ctrl_c().await;
        })
    }
}
