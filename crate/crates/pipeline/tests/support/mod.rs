//! Synthetic fixtures, a CLI runner and a bare HTTP/1.1 client.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

pub const DIMS: usize = 16;

/// Word vectors and posts where hate is carried by seed terms and by
/// emergent terms that only live near the seeds in embedding space.
pub struct Synthetic {
    pub seeds: Vec<String>,
    pub emergent: Vec<String>,
    pub benign: Vec<String>,
    pub table: Vec<(String, Vec<f32>)>,
    /// `(id, text, is_hate)`.
    pub posts: Vec<(String, String, bool)>,
}

pub struct SyntheticSpec {
    pub seeds: usize,
    pub emergent_per_seed: usize,
    pub benign: usize,
    pub posts: usize,
    pub filler: usize,
    /// Share of hate posts that use a seed term rather than an emergent one.
    pub seed_share: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { seeds: 10, emergent_per_seed: 4, benign: 400, posts: 2000, filler: 10, seed_share: 0.25 }
    }
}

fn cos(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum();
    let na: f64 = a.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn random_vec(rng: &mut ChaCha8Rng) -> Vec<f32> {
    (0..DIMS).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
}

fn edit_distance(a: &str, b: &str) -> usize {
    let (a, b): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for i in 1..=a.len() {
        let mut cur = vec![i; b.len() + 1];
        for j in 1..=b.len() {
            cur[j] = (prev[j - 1] + usize::from(a[i - 1] != b[j - 1])).min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

/// Letter-only consonant-vowel pseudo-words at Levenshtein distance >= 4
/// from every word in `avoid`. A swap costs two plain edits, so the
/// Damerau distance stays >= 2 and a distance-1 fuzzy match cannot fire.
fn pseudo_words(rng: &mut ChaCha8Rng, n: usize, syllables: usize, avoid: &[String], taken: &mut BTreeSet<String>) -> Vec<String> {
    const C: &[u8] = b"bdfgklmnprstvz";
    const V: &[u8] = b"aeiou";
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut w = String::new();
        for _ in 0..syllables {
            w.push(C[rng.gen_range(0..C.len())] as char);
            w.push(V[rng.gen_range(0..V.len())] as char);
        }
        if taken.contains(&w) || avoid.iter().any(|a| edit_distance(a, &w) < 4) {
            continue;
        }
        taken.insert(w.clone());
        out.push(w);
    }
    out
}

pub fn synthetic(seed: u64, spec: &SyntheticSpec) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taken = BTreeSet::new();
    let seeds = pseudo_words(&mut rng, spec.seeds, 3, &[], &mut taken);
    let mut toxic = seeds.clone();
    let emergent = pseudo_words(&mut rng, spec.seeds * spec.emergent_per_seed, 3, &toxic, &mut taken);
    toxic.extend(emergent.iter().cloned());
    let benign = pseudo_words(&mut rng, spec.benign, 3, &toxic, &mut taken);

    let seed_vecs: Vec<Vec<f32>> = (0..spec.seeds).map(|_| random_vec(&mut rng)).collect();
    let mut table: Vec<(String, Vec<f32>)> = seeds.iter().cloned().zip(seed_vecs.iter().cloned()).collect();
    for (i, term) in emergent.iter().enumerate() {
        let base = &seed_vecs[i / spec.emergent_per_seed];
        let v = loop {
            let v: Vec<f32> = base.iter().map(|&x| x + 0.35 * rng.gen_range(-1.0f32..1.0)).collect();
            let c = cos(&v, base);
            if (0.8..0.97).contains(&c) {
                break v;
            }
        };
        table.push((term.clone(), v));
    }
    let toxic_vecs: Vec<Vec<f32>> = table.iter().map(|(_, v)| v.clone()).collect();
    for term in &benign {
        let v = loop {
            let v = random_vec(&mut rng);
            if toxic_vecs.iter().all(|t| cos(&v, t) < 0.7) {
                break v;
            }
        };
        table.push((term.clone(), v));
    }

    let mut posts = Vec::with_capacity(spec.posts);
    for i in 0..spec.posts {
        let hate = i % 2 == 0;
        let mut words: Vec<&str> = (0..spec.filler).map(|_| benign.choose(&mut rng).unwrap().as_str()).collect();
        if hate {
            let w = if rng.gen_bool(spec.seed_share) {
                seeds.choose(&mut rng).unwrap()
            } else {
                emergent.choose(&mut rng).unwrap()
            };
            words.push(w);
        }
        words.shuffle(&mut rng);
        posts.push((format!("p{i:05}"), words.join(" "), hate));
    }
    Synthetic { seeds, emergent, benign, table, posts }
}

impl Synthetic {
    pub fn embeddings_text(&self) -> String {
        let mut s = String::new();
        for (t, v) in &self.table {
            s.push_str(t);
            for x in v {
                let _ = write!(s, " {x}");
            }
            s.push('\n');
        }
        s
    }

    pub fn corpus_jsonl(&self) -> String {
        let mut s = String::new();
        for (id, text, hate) in &self.posts {
            let label = if *hate { "hate" } else { "normal" };
            s.push_str(&serde_json::json!({ "id": id, "text": text, "label": label }).to_string());
            s.push('\n');
        }
        s
    }

    /// Writes inputs plus a config into `dir`; returns the config path.
    pub fn write_inputs(&self, dir: &Path, extra: Value) -> PathBuf {
        std::fs::write(dir.join("embeddings.txt"), self.embeddings_text()).unwrap();
        std::fs::write(dir.join("seeds.txt"), self.seeds.join("\n") + "\n").unwrap();
        std::fs::write(dir.join("corpus.jsonl"), self.corpus_jsonl()).unwrap();
        let mut cfg = serde_json::json!({
            "paths": {
                "embeddings": "embeddings.txt",
                "seed_lists": ["seeds.txt"],
                "corpus": "corpus.jsonl"
            }
        });
        merge(&mut cfg, extra);
        let path = dir.join("config.json");
        std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
        path
    }
}

fn merge(base: &mut Value, extra: Value) {
    match (base, extra) {
        (Value::Object(b), Value::Object(e)) => {
            for (k, v) in e {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, e) => *b = e,
    }
}

/// The small table used by the documented expansion example.
pub fn write_tiny_fixture(dir: &Path, extra_rows: &str) -> PathBuf {
    let table = format!("hate 1 0\ndespise 0.9 0.2\nloathe 0.6 0.8\npizza 0 1\n{extra_rows}");
    std::fs::write(dir.join("embeddings.txt"), table).unwrap();
    std::fs::write(dir.join("seeds.txt"), "hate\n").unwrap();
    std::fs::write(
        dir.join("corpus.jsonl"),
        concat!(
            "{\"id\":\"1\",\"text\":\"I despise them all\",\"label\":\"hate\"}\n",
            "{\"id\":\"2\",\"text\":\"pizza tonight\",\"label\":\"normal\"}\n",
            "{\"id\":\"3\",\"text\":\"they hate pizza\",\"label\":\"hate\"}\n",
        ),
    )
    .unwrap();
    let cfg = r#"{"paths": {"embeddings": "embeddings.txt", "seed_lists": ["seeds.txt"], "corpus": "corpus.jsonl"}}"#;
    let path = dir.join("config.json");
    std::fs::write(&path, cfg).unwrap();
    path
}

pub fn adaptox(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adaptox"))
        .arg("--config")
        .arg(config)
        .args(args)
        .output()
        .expect("binary runs")
}

/// Runs a subcommand and panics with its stderr unless it exits 0.
pub fn adaptox_ok(config: &Path, args: &[&str]) -> Output {
    let out = adaptox(config, args);
    assert!(
        out.status.success(),
        "adaptox {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// A `review-serve` child process on an ephemeral port.
pub struct Server {
    pub child: Child,
    pub addr: String,
}

impl Server {
    pub fn start(config: &Path) -> Server {
        let mut child = Command::new(env!("CARGO_BIN_EXE_adaptox"))
            .arg("--config")
            .arg(config)
            .args(["review-serve", "--bind", "127.0.0.1:0"])
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .expect("server spawns");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let v: Value = serde_json::from_str(line.trim()).unwrap_or_else(|_| {
            let mut err = String::new();
            let _ = child.stderr.take().unwrap().read_to_string(&mut err);
            panic!("server did not start: {line:?} {err}")
        });
        Server { child, addr: v["listening"].as_str().unwrap().to_string() }
    }

    /// SIGKILL: no shutdown hooks run.
    pub fn kill(mut self) {
        self.child.kill().unwrap();
        self.child.wait().unwrap();
    }

    pub fn get(&self, path: &str) -> (u16, Value) {
        http(&self.addr, "GET", path, None, "")
    }

    pub fn post_json(&self, path: &str, body: &str) -> (u16, Value) {
        http(&self.addr, "POST", path, Some("application/json"), body)
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// One request over a fresh connection with `Connection: close`.
pub fn http(addr: &str, method: &str, path: &str, content_type: Option<&str>, body: &str) -> (u16, Value) {
    let mut s = TcpStream::connect(addr).unwrap();
    let mut req = format!("{method} {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n");
    if let Some(ct) = content_type {
        let _ = write!(req, "Content-Type: {ct}\r\n");
    }
    let _ = write!(req, "Content-Length: {}\r\n\r\n{body}", body.len());
    s.write_all(req.as_bytes()).unwrap();
    let mut raw = Vec::new();
    s.read_to_end(&mut raw).unwrap();
    let text = String::from_utf8(raw).unwrap();
    let (head, payload) = text.split_once("\r\n\r\n").expect("http response");
    let status: u16 = head.split(' ').nth(1).unwrap().parse().unwrap();
    assert!(
        !head.to_ascii_lowercase().contains("transfer-encoding: chunked"),
        "client expects a content-length body"
    );
    let value = if payload.trim().is_empty() { Value::Null } else { serde_json::from_str(payload).unwrap_or(Value::String(payload.into())) };
    (status, value)
}
