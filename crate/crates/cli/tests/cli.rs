use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

use serde_json::{json, Value};

fn curate(data: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curate"))
        .arg("--data-dir")
        .arg(data)
        .args(args)
        .env_remove("TELE_DATA_DIR")
        .env_remove("TELE_PROVIDER_URL")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TOPICS: [&str; 3] = ["wifi router bill", "netflix password share", "rent deposit landlord"];

fn write_docs(path: &Path, n: usize) {
    let mut f = fs::File::create(path).unwrap();
    for i in 0..n {
        let rec = json!({ "id": format!("d{i}"), "title": format!("post {i}"), "text": format!("{} {}", TOPICS[i % 3], i) });
        writeln!(f, "{rec}").unwrap();
    }
}

fn seeded(n: usize) -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    let docs = tmp.path().join("docs.jsonl");
    write_docs(&docs, n);
    let o = curate(
        &tmp.path().join("data"),
        &["ingest", docs.to_str().unwrap(), "--corpus", "c", "--id-field", "id", "--title-field", "title", "--body-field", "text"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), format!("ingested {n} documents, skipped 0\n"));
    tmp
}

#[test]
fn ingest_reports_counts_and_failures() {
    let tmp = seeded(12);
    let data = tmp.path().join("data");

    let missing = curate(&data, &["--json-errors", "ingest", "nope.jsonl", "--corpus", "c"]);
    assert_eq!(missing.status.code(), Some(1));
    let err: Value = serde_json::from_str(stderr(&missing).trim()).unwrap();
    assert_eq!(err["error"], "Io");

    let messy = tmp.path().join("messy.jsonl");
    fs::write(
        &messy,
        "{\"id\":\"m1\",\"title\":\"t\",\"text\":\"fine\"}\nnot json\n{\"id\":\"m2\",\"title\":\"t\",\"text\":\"\"}\n",
    )
    .unwrap();
    let args = ["ingest", messy.to_str().unwrap(), "--corpus", "c", "--id-field", "id", "--title-field", "title", "--body-field", "text"];
    let strict = curate(&data, &args);
    assert_eq!(strict.status.code(), Some(1));
    assert!(stderr(&strict).contains("MalformedRecord"), "{}", stderr(&strict));

    let mut lenient = args.to_vec();
    lenient.push("--lenient");
    let o = curate(&data, &lenient);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "ingested 1 documents, skipped 2\n");

    let named = tmp.path().join("selfposts.jsonl");
    fs::write(&named, "{\"title\":\"t\",\"selftext\":\"my wifi\"}\n").unwrap();
    let o = curate(&data, &["ingest", named.to_str().unwrap(), "--body-field", "selftext", "--title-field", "title"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "ingested 1 documents, skipped 0\n");
    assert!(data.join("corpora/selfposts/docs.jsonl").is_file());

    let other = curate(&data, &["--json-errors", "ingest", messy.to_str().unwrap(), "--corpus", "c", "--body-field", "body"]);
    let err: Value = serde_json::from_str(stderr(&other).trim()).unwrap();
    assert_eq!(err["error"], "FieldMapMismatch");
}

#[test]
fn index_and_embed_are_incremental() {
    let tmp = seeded(9);
    let data = tmp.path().join("data");
    let o = curate(&data, &["index", "--corpus", "c"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("indexed 9 documents"));
    assert!(data.join("corpora/c/index.bin").is_file());

    let o = curate(&data, &["embed", "--corpus", "c"]);
    assert!(stdout(&o).starts_with("embedded 9 documents (9 total)"), "{}", stdout(&o));

    let more = tmp.path().join("more.jsonl");
    fs::write(&more, "{\"id\":\"x1\",\"title\":\"late\",\"text\":\"wifi again\"}\n").unwrap();
    curate(&data, &["ingest", more.to_str().unwrap(), "--corpus", "c"]);
    let o = curate(&data, &["embed", "--corpus", "c"]);
    assert!(stdout(&o).starts_with("embedded 1 documents (10 total)"), "{}", stdout(&o));

    let o = curate(&data, &["--json-errors", "embed", "--corpus", "absent"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("\"NotFound\""));
}

const FLOW: &str = r#"{
  "version": 1,
  "workspace_id": "flow",
  "seed": 7,
  "nodes": [
    {"node_id": "s", "kind": "Search", "config": {"query": "wifi OR rent"}},
    {"node_id": "g", "kind": "Group", "config": {"label": "picked", "members": ["d0"]}},
    {"node_id": "r", "kind": "Rank", "config": {"max_results": 5, "similarity_floor": -1.0}}
  ],
  "edges": [
    {"from": "g", "to": "r", "port": "control"},
    {"from": "s", "to": "r", "port": "source"}
  ],
  "outputs": ["s", "r"]
}"#;

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn runs_are_reproducible() {
    let tmp = seeded(30);
    let data = tmp.path().join("data");
    let wf = tmp.path().join("flow.json");
    fs::write(&wf, FLOW).unwrap();
    let wf = wf.to_str().unwrap();

    let o = curate(&data, &["--json-errors", "run", wf, "--corpus", "c", "--out", "unused"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("\"NotEmbedded\""), "{}", stderr(&o));
    curate(&data, &["embed", "--corpus", "c"]);

    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        let o = curate(&data, &["run", wf, "--corpus", "c", "--out", out.to_str().unwrap(), "--csv"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let (fa, fb) = (read_dir_sorted(&a), read_dir_sorted(&b));
    assert_eq!(fa.len(), fb.len());
    assert!(fa.len() >= 5, "{:?}", fa.iter().map(|f| &f.0).collect::<Vec<_>>());
    for ((na, ba), (nb, bb)) in fa.iter().zip(&fb) {
        assert_eq!(na, nb);
        if na == "manifest.json" {
            let mut ma: Value = serde_json::from_slice(ba).unwrap();
            let mut mb: Value = serde_json::from_slice(bb).unwrap();
            ma["wall_time_ms"] = json!(0);
            mb["wall_time_ms"] = json!(0);
            assert_eq!(ma, mb);
            assert_eq!(ma["seed"], 7);
            assert_eq!(ma["outputs"].as_array().unwrap().len(), 4);
        } else {
            assert_eq!(ba, bb, "{na}");
        }
    }

    let o = curate(&data, &["--json-errors", "run", wf, "--corpus", "c", "--out", a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("\"OutputExists\""), "{}", stderr(&o));
    let o = curate(&data, &["--force", "--seed", "9", "run", wf, "--corpus", "c", "--out", a.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m: Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 9);

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, FLOW.replace("[\"s\", \"r\"]", "[\"s\", \"zz\"]")).unwrap();
    let o = curate(&data, &["--json-errors", "run", bad.to_str().unwrap(), "--corpus", "c", "--out", "c"]);
    assert_eq!(o.status.code(), Some(1));
    let err: Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert_eq!(err["error"], "SchemaError");
    assert!(!tmp.path().join("c").exists());
}

#[test]
fn export_writes_documents() {
    let tmp = seeded(6);
    let data = tmp.path().join("data");
    let o = curate(&data, &["export", "--corpus", "c", "--ids", "d4,d1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let docs: Value = serde_json::from_slice(&o.stdout).unwrap();
    let ids: Vec<_> = docs.as_array().unwrap().iter().map(|d| d["doc_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["d4", "d1"]);

    let out = tmp.path().join("docs.csv");
    let o = curate(&data, &["export", "--corpus", "c", "--ids", "d0", "--format", "csv", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(fs::read_to_string(&out).unwrap().contains("d0"));
    let o = curate(&data, &["export", "--corpus", "c", "--ids", "d0", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));

    let o = curate(&data, &["--json-errors", "export", "--corpus", "c", "--ids", "zz"]);
    assert!(stderr(&o).contains("\"NotFound\""));
}

struct Served {
    child: Child,
    addr: String,
}

impl Served {
    fn start(data: &Path) -> Served {
        let mut child = Command::new(env!("CARGO_BIN_EXE_curate"))
            .arg("--data-dir")
            .arg(data)
            .args(["serve", "--host", "127.0.0.1", "--port", "0"])
            .env_remove("TELE_PORT")
            .env_remove("TELE_PROVIDER_URL")
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let addr = line.trim().strip_prefix("listening on ").expect(&line).to_owned();
        Served { child, addr }
    }

    fn request(&self, method: &str, path: &str, token: Option<&str>, body: Option<Value>) -> (u16, Value) {
        let mut s = TcpStream::connect(&self.addr).unwrap();
        let body = body.map(|b| b.to_string()).unwrap_or_default();
        let auth = token.map(|t| format!("authorization: Bearer {t}\r\n")).unwrap_or_default();
        write!(
            s,
            "{method} {path} HTTP/1.1\r\nhost: x\r\nconnection: close\r\ncontent-type: application/json\r\n{auth}content-length: {}\r\n\r\n{body}",
            body.len()
        )
        .unwrap();
        let mut raw = String::new();
        s.read_to_string(&mut raw).unwrap();
        let (head, payload) = raw.split_once("\r\n\r\n").unwrap();
        let status = head.split(' ').nth(1).unwrap().parse().unwrap();
        (status, serde_json::from_str(payload).unwrap_or(Value::Null))
    }

    fn session(&self) -> String {
        let (_, v) = self.request("POST", "/v1/sessions", None, Some(json!({ "actor_id": "ana" })));
        v["token"].as_str().unwrap().to_owned()
    }
}

impl Drop for Served {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[test]
fn serve_recovers_acknowledged_commands_after_a_kill() {
    let tmp = seeded(15);
    let data = tmp.path().join("data");
    let mut server = Served::start(&data);
    assert_eq!(server.request("GET", "/v1/health", None, None).0, 200);
    let token = server.session();
    let t = Some(token.as_str());
    let (status, _) = server.request("POST", "/v1/workspaces", t, Some(json!({ "workspace_id": "w", "corpus_id": "c", "seed": 3 })));
    assert_eq!(status, 201);
    let cmds = [
        json!({ "op": "AddNode", "kind": "Search", "config": { "query": "wifi" } }),
        json!({ "op": "AddNode", "kind": "Group", "config": { "label": "g", "members": ["d0"] } }),
        json!({ "op": "AddNode", "kind": "Rank", "config": { "max_results": 4, "similarity_floor": -1.0 } }),
        json!({ "op": "AddEdge", "from": "n1", "to": "n3", "port": "source" }),
        json!({ "op": "AddEdge", "from": "n2", "to": "n3", "port": "control" }),
        json!({ "op": "MoveNode", "node_id": "n1", "position": { "x": 40.0, "y": 10.0 } }),
        json!({ "op": "Undo" }),
    ];
    for c in &cmds {
        let (status, v) = server.request("POST", "/v1/workspaces/w/commands", t, Some(c.clone()));
        assert_eq!(status, 200, "{c} -> {v}");
    }
    let (_, before) = server.request("GET", "/v1/workspaces/w/snapshot", t, None);
    let (_, log_before) = server.request("GET", "/v1/workspaces/w/log?from_seq=0&limit=1000", t, None);

    server.child.kill().unwrap();
    server.child.wait().unwrap();
    let server = Served::start(&data);
    let token = server.session();
    let t = Some(token.as_str());
    let (_, after) = server.request("GET", "/v1/workspaces/w/snapshot", t, None);
    let (_, log_after) = server.request("GET", "/v1/workspaces/w/log?from_seq=0&limit=1000", t, None);
    assert_eq!(before, after);
    assert_eq!(log_before, log_after);
    assert_eq!(log_after["last_seq"], cmds.len() as u64);

    let (status, v) = server.request("POST", "/v1/workspaces/w/commands", t, Some(json!({ "op": "Redo" })));
    assert_eq!(status, 200, "{v}");
    assert_eq!(v["seq"], cmds.len() as u64 + 1);
    let (status, _) = server.request("POST", "/v1/corpora/c/ingest", t, Some(json!({ "id": "late", "text": "x" })));
    assert_eq!(status, 409);
    drop(server);

    let o = curate(&data, &["export", "--corpus", "c", "--workspace", "w", "--node", "n3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let docs: Value = serde_json::from_slice(&o.stdout).unwrap();
    let docs = docs.as_array().unwrap();
    assert_eq!(docs.len(), 4);
    assert!(docs.iter().all(|d| d["body"].as_str().unwrap().contains("wifi")));
    let o = curate(&data, &["--json-errors", "export", "--corpus", "c", "--workspace", "w", "--node", "n9"]);
    assert!(stderr(&o).contains("\"NotFound\""), "{}", stderr(&o));
}

#[cfg(unix)]
#[test]
fn serve_exits_cleanly_on_sigterm() {
    let tmp = tempfile::tempdir().unwrap();
    let mut server = Served::start(tmp.path());
    let pid = server.child.id().to_string();
    assert!(Command::new("kill").args(["-TERM", &pid]).status().unwrap().success());
    let status = server.child.wait().unwrap();
    assert_eq!(status.code(), Some(0));

    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let o = curate(tmp.path(), &["--json-errors", "serve", "--host", "127.0.0.1", "--port", &port]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("\"BindFailed\""), "{}", stderr(&o));
}
