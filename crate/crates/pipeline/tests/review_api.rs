mod support;

use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use support::{adaptox_ok, http, write_tiny_fixture, Server};

/// Three candidates around the seed `hate`: detest, abhor, despise.
fn reviewable(dir: &Path) -> PathBuf {
    let cfg = write_tiny_fixture(dir, "detest 0.95 0.1\nabhor 0.92 0.15\n");
    adaptox_ok(&cfg, &["sanitize"]);
    adaptox_ok(&cfg, &["expand"]);
    cfg
}

fn log_lines(dir: &Path) -> usize {
    std::fs::read_to_string(dir.join("work/decisions.jsonl")).unwrap().lines().count()
}

fn decision(term: &str, verdict: &str) -> String {
    json!({ "term": term, "decision": verdict, "reviewer": "r1", "ts": "t" }).to_string()
}

#[test]
fn candidates_are_paged_by_similarity() {
    let dir = tempfile::tempdir().unwrap();
    let server = Server::start(&reviewable(dir.path()));
    let (status, first) = server.get("/candidates?page=1&page_size=2");
    assert_eq!(status, 200);
    assert_eq!(first["total"], 3);
    let terms: Vec<&str> = first["items"].as_array().unwrap().iter().map(|i| i["term"].as_str().unwrap()).collect();
    assert_eq!(terms, ["detest", "abhor"]);
    let (_, second) = server.get("/candidates?page=2&page_size=2");
    assert_eq!(second["items"].as_array().unwrap().len(), 1);
    assert_eq!(second["items"][0]["term"], "despise");
    let (_, beyond) = server.get("/candidates?page=9&page_size=2");
    assert_eq!(beyond["items"], json!([]));

    let item = &second["items"][0];
    assert_eq!(item["evidence"]["seed"], "hate");
    assert_eq!(item["generation"], 1);
    assert_eq!(item["examples"][0]["id"], "1");
    assert!(!item["neighbors"].as_array().unwrap().is_empty());

    let (_, gen1) = server.get("/candidates?generation=1");
    assert_eq!(gen1["total"], 3);
    let (_, gen2) = server.get("/candidates?generation=2");
    assert_eq!(gen2["total"], 0);

    assert_eq!(server.get("/candidates?page=0").0, 400);
    assert_eq!(server.get("/candidates?bogus=1").0, 400);
}

#[test]
fn bad_requests_are_rejected_without_side_effects() {
    let dir = tempfile::tempdir().unwrap();
    let server = Server::start(&reviewable(dir.path()));
    assert_eq!(server.post_json("/decisions", &decision("pizza", "accept")).0, 404);
    assert_eq!(server.post_json("/decisions", &decision("nowhere", "accept")).0, 404);
    assert_eq!(server.post_json("/decisions", "{\"term\": ").0, 400);
    assert_eq!(server.post_json("/decisions", &decision("detest", "maybe")).0, 400);
    assert_eq!(server.post_json("/decisions", "[]").0, 400);
    let no_reviewer = json!({ "term": "detest", "decision": "accept", "reviewer": " " }).to_string();
    assert_eq!(server.post_json("/decisions", &no_reviewer).0, 400);
    let (status, _) = http(&server.addr, "POST", "/decisions", Some("text/plain"), &decision("detest", "accept"));
    assert_eq!(status, 415);
    let (status, body) = server.post_json("/decisions", &decision("hate", "reject"));
    assert_eq!(status, 409);
    assert!(body["error"].is_string());

    // One bad entry sinks the whole batch.
    let batch = format!("[{}, {}]", decision("detest", "accept"), decision("nowhere", "accept"));
    assert_eq!(server.post_json("/decisions", &batch).0, 404);
    assert_eq!(log_lines(dir.path()), 0);
    let (_, q) = server.get("/candidates");
    assert_eq!(q["total"], 3);
}

#[test]
fn decisions_are_idempotent_and_logged() {
    let dir = tempfile::tempdir().unwrap();
    let server = Server::start(&reviewable(dir.path()));
    let (status, body) = server.post_json("/decisions", &decision("Detest ", "accept"));
    assert_eq!(status, 200, "{body}");
    assert_eq!(body["entry"]["status"], "accepted");
    assert_eq!(body["counts"]["accepted"], 1);
    let (status, again) = server.post_json("/decisions", &decision("detest", "accept"));
    assert_eq!(status, 200);
    assert_eq!(again["counts"], body["counts"]);
    assert_eq!(log_lines(dir.path()), 2);
    assert_eq!(server.post_json("/decisions", &decision("detest", "reject")).0, 409);

    let batch = format!("[{}, {}]", decision("abhor", "reject"), decision("despise", "accept"));
    let (status, body) = server.post_json("/decisions", &batch);
    assert_eq!(status, 200);
    assert_eq!(body["entries"][0]["status"], "rejected");
    assert_eq!(body["entries"][1]["status"], "accepted");
    assert_eq!(log_lines(dir.path()), 4);

    let (_, stats) = server.get("/stats");
    assert_eq!(stats["decisions_logged"], 4);
    assert_eq!(stats["counts"]["accepted"], 2);
    assert_eq!(stats["counts"]["rejected"], 1);
    assert_eq!(stats["review_progress"], 1.0);

    let (_, lex) = server.get("/lexicon");
    assert_eq!(lex["seed"]["terms"], json!(["hate"]));
    assert_eq!(lex["updated"]["terms"], json!(["hate", "despise", "detest"]));
    assert_ne!(lex["seed"]["fingerprint"], lex["updated"]["fingerprint"]);
}

#[test]
fn expand_round_uses_accepted_terms() {
    let dir = tempfile::tempdir().unwrap();
    let server = Server::start(&reviewable(dir.path()));
    for t in ["despise", "detest", "abhor"] {
        assert_eq!(server.post_json("/decisions", &decision(t, "accept")).0, 200);
    }
    // loathe is 0.759 from despise but only 0.6 from hate.
    let (status, body) = server.post_json("/expand", "");
    assert_eq!(status, 200, "{body}");
    assert_eq!(body["generation"], 2);
    assert_eq!(body["candidates"], json!(["loathe"]));
    let (_, q) = server.get("/candidates?generation=2");
    assert_eq!(q["items"][0]["term"], "loathe");

    let (status, body) = server.post_json("/expand", "{\"threshold\": 0.5}");
    assert_eq!(status, 200);
    assert_eq!(body["candidates"], json!([]));
    assert_eq!(server.post_json("/expand", "{\"threshold\": 2}").0, 400);
    assert_eq!(server.post_json("/expand", "{\"thresh\": 0.5}").0, 400);
}

#[test]
fn state_survives_kill_between_requests() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = reviewable(dir.path());
    let server = Server::start(&cfg);
    assert_eq!(server.post_json("/decisions", &decision("abhor", "reject")).0, 200);
    server.kill();
    // A log entry that never reached lexicon.json is replayed on start.
    let mut log = std::fs::OpenOptions::new().append(true).open(dir.path().join("work/decisions.jsonl")).unwrap();
    use std::io::Write as _;
    writeln!(log, "{}", json!({ "term": "detest", "decision": "accept", "reviewer": "r1", "ts": "t" })).unwrap();
    drop(log);
    let server = Server::start(&cfg);
    let (_, lex) = server.get("/lexicon");
    let status_of = |t: &str| -> Value {
        lex["entries"].as_array().unwrap().iter().find(|e| e["term"] == t).unwrap()["status"].clone()
    };
    assert_eq!(status_of("abhor"), "rejected");
    assert_eq!(status_of("detest"), "accepted");
    assert_eq!(status_of("despise"), "candidate");
}
