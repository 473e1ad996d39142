//! Post corpora from CSV or JSON lines, with label collapsing.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("row {row}: {message}")]
    Malformed { row: usize, message: String },
    #[error("row {row}: unmapped label {label:?}")]
    UnmappedLabel { row: usize, label: String },
    #[error("row {row}: duplicate id {id:?}")]
    DuplicateId { row: usize, id: String },
    #[error("unknown label {0:?} (expected \"hate\" or \"normal\")")]
    UnknownLabel(String),
    #[error("split ratio {0} outside (0, 1)")]
    BadRatio(f64),
    #[error("class {0} has fewer than 2 posts; cannot stratify")]
    ClassTooSmall(Label),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Hate,
    Normal,
}

impl Label {
    pub fn is_hate(self) -> bool {
        self == Label::Hate
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Hate => "hate",
            Label::Normal => "normal",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hate" | "h" => Ok(Label::Hate),
            "normal" | "n" => Ok(Label::Normal),
            _ => Err(CorpusError::UnknownLabel(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    pub source: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelTarget {
    Hate,
    Normal,
    Drop,
}

/// Raw dataset label → collapsed label. Must cover every label in the file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelMapping(pub BTreeMap<String, LabelTarget>);

impl LabelMapping {
    pub fn new<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, LabelTarget)>,
        S: Into<String>,
    {
        Self(pairs.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    /// `hate`→hate, `normal`→normal, for canonical files.
    pub fn identity() -> Self {
        Self::new([("hate", LabelTarget::Hate), ("normal", LabelTarget::Normal)])
    }

    fn get(&self, raw: &str) -> Option<LabelTarget> {
        self.0.get(raw).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
}

/// Column (CSV) or field (JSONL) names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    /// When absent, ids are 1-based row numbers.
    #[serde(default)]
    pub id: Option<String>,
    pub text: String,
    #[serde(default)]
    pub label: Option<String>,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            id: Some("id".into()),
            text: "text".into(),
            label: Some("label".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub format: Format,
    #[serde(default)]
    pub schema: Schema,
    #[serde(default)]
    pub mapping: LabelMapping,
    #[serde(default)]
    pub anonymize: bool,
    /// Dataset label stored on every post.
    #[serde(default = "default_source")]
    pub source: String,
}

fn default_source() -> String {
    "corpus".into()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadSummary {
    pub rows: usize,
    pub kept: usize,
    pub dropped: usize,
    pub raw_label_counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    posts: Vec<Post>,
}

impl Corpus {
    /// Checks id uniqueness and non-empty text.
    pub fn new(posts: Vec<Post>) -> Result<Self, CorpusError> {
        let mut ids = HashSet::new();
        for (i, p) in posts.iter().enumerate() {
            if p.text.trim().is_empty() {
                return Err(CorpusError::Malformed {
                    row: i + 1,
                    message: "empty text".into(),
                });
            }
            if !ids.insert(p.id.as_str()) {
                return Err(CorpusError::DuplicateId {
                    row: i + 1,
                    id: p.id.clone(),
                });
            }
        }
        Ok(Self { posts })
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    /// Labels in corpus order; `None` if any post is unlabeled.
    pub fn labels(&self) -> Option<Vec<Label>> {
        self.posts.iter().map(|p| p.label).collect()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.posts.iter().map(|p| p.id.as_str())
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), CorpusError> {
        let io_err = |e| CorpusError::Io {
            path: path.to_path_buf(),
            source: e,
        };
        let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
        for p in &self.posts {
            serde_json::to_writer(&mut out, p).expect("post serializes");
            out.write_all(b"\n").map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    }

    /// Reads the canonical `{id, text, label?, source}` export.
    pub fn read_jsonl(path: &Path) -> Result<Self, CorpusError> {
        let f = File::open(path).map_err(|e| CorpusError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut posts = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| CorpusError::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            posts.push(serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                row: i + 1,
                message: e.to_string(),
            })?);
        }
        Self::new(posts)
    }
}

fn mention_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"@\w+").expect("valid regex"))
}

pub const ANON_HANDLE: &str = "@ANON";

pub fn anonymize_handles(text: &str) -> String {
    mention_re().replace_all(text, ANON_HANDLE).into_owned()
}

struct RawRow {
    row: usize,
    id: Option<String>,
    text: String,
    label: Option<String>,
}

fn scalar_to_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn read_raw_rows(path: &Path, opts: &LoadOptions) -> Result<Vec<RawRow>, CorpusError> {
    let io_err = |e| CorpusError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut rows = Vec::new();
    match opts.format {
        Format::Csv => {
            let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
                csv::ErrorKind::Io(e) => io_err(e),
                other => CorpusError::Malformed {
                    row: 0,
                    message: format!("{other:?}"),
                },
            })?;
            let headers = reader
                .headers()
                .map_err(|e| CorpusError::Malformed {
                    row: 1,
                    message: e.to_string(),
                })?
                .clone();
            let col = |name: &str| {
                headers.iter().position(|h| h == name).ok_or_else(|| CorpusError::Malformed {
                    row: 1,
                    message: format!("missing column {name:?}"),
                })
            };
            let id_col = opts.schema.id.as_deref().map(col).transpose()?;
            let text_col = col(&opts.schema.text)?;
            let label_col = opts.schema.label.as_deref().map(col).transpose()?;
            for (i, rec) in reader.records().enumerate() {
                // Header is line 1.
                let row = i + 2;
                let rec = rec.map_err(|e| CorpusError::Malformed {
                    row,
                    message: e.to_string(),
                })?;
                let field = |c: usize| {
                    rec.get(c).map(str::to_string).ok_or_else(|| CorpusError::Malformed {
                        row,
                        message: format!("missing field {c}"),
                    })
                };
                rows.push(RawRow {
                    row,
                    id: id_col.map(field).transpose()?,
                    text: field(text_col)?,
                    label: label_col.map(field).transpose()?,
                });
            }
        }
        Format::Jsonl => {
            let f = File::open(path).map_err(io_err)?;
            for (i, line) in BufReader::new(f).lines().enumerate() {
                let row = i + 1;
                let line = line.map_err(io_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                let v: Value = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                    row,
                    message: e.to_string(),
                })?;
                let field = |name: &str| {
                    v.get(name).and_then(scalar_to_string).ok_or_else(|| CorpusError::Malformed {
                        row,
                        message: format!("missing field {name:?}"),
                    })
                };
                rows.push(RawRow {
                    row,
                    id: opts.schema.id.as_deref().map(field).transpose()?,
                    text: field(&opts.schema.text)?,
                    label: opts.schema.label.as_deref().map(field).transpose()?,
                });
            }
        }
    }
    Ok(rows)
}

/// Loads a corpus, collapsing raw labels through the mapping. An unmapped
/// label aborts the load instead of silently dropping rows.
pub fn load_corpus(path: &Path, opts: &LoadOptions) -> Result<(Corpus, LoadSummary), CorpusError> {
    let raw = read_raw_rows(path, opts)?;
    let mut summary = LoadSummary {
        rows: raw.len(),
        ..LoadSummary::default()
    };
    let mut posts = Vec::with_capacity(raw.len());
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (n, r) in raw.into_iter().enumerate() {
        let label = match r.label {
            None => None,
            Some(raw_label) => {
                let raw_label = raw_label.trim().to_string();
                *summary.raw_label_counts.entry(raw_label.clone()).or_default() += 1;
                match opts.mapping.get(&raw_label) {
                    None => {
                        return Err(CorpusError::UnmappedLabel {
                            row: r.row,
                            label: raw_label,
                        })
                    }
                    Some(LabelTarget::Drop) => {
                        summary.dropped += 1;
                        continue;
                    }
                    Some(LabelTarget::Hate) => Some(Label::Hate),
                    Some(LabelTarget::Normal) => Some(Label::Normal),
                }
            }
        };
        let id = r.id.unwrap_or_else(|| (n + 1).to_string());
        if seen.insert(id.clone(), r.row).is_some() {
            return Err(CorpusError::DuplicateId { row: r.row, id });
        }
        if r.text.trim().is_empty() {
            return Err(CorpusError::Malformed {
                row: r.row,
                message: "empty text".into(),
            });
        }
        let text = if opts.anonymize {
            anonymize_handles(&r.text)
        } else {
            r.text
        };
        posts.push(Post {
            id,
            text,
            label,
            source: opts.source.clone(),
        });
    }
    summary.kept = posts.len();
    Ok((Corpus { posts }, summary))
}

/// Deterministic train/test split; `ratio` is the train fraction.
///
/// Stratified splits allocate per-class train counts by largest remainder so
/// the overall train size still equals `round(n * ratio)`.
pub fn split(
    corpus: &Corpus,
    ratio: f64,
    seed: u64,
    stratified: bool,
) -> Result<(Corpus, Corpus), CorpusError> {
    let labels: Vec<Option<Label>> = corpus.posts.iter().map(|p| p.label).collect();
    let (train, test) = split_indices(&labels, ratio, seed, stratified)?;
    let pick = |idx: &[usize]| Corpus {
        posts: idx.iter().map(|&i| corpus.posts[i].clone()).collect(),
    };
    Ok((pick(&train), pick(&test)))
}

/// Index form of [`split`]: ascending train and test positions.
pub fn split_indices(
    labels: &[Option<Label>],
    ratio: f64,
    seed: u64,
    stratified: bool,
) -> Result<(Vec<usize>, Vec<usize>), CorpusError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(CorpusError::BadRatio(ratio));
    }
    let n = labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train_target = (n as f64 * ratio).round() as usize;
    let mut train_idx = Vec::new();
    if stratified {
        let mut groups: BTreeMap<Option<Label>, Vec<usize>> = BTreeMap::new();
        for (i, l) in labels.iter().enumerate() {
            groups.entry(*l).or_default().push(i);
        }
        for (label, members) in &groups {
            if let (Some(l), true) = (label, members.len() < 2) {
                return Err(CorpusError::ClassTooSmall(*l));
            }
        }
        let exact: Vec<f64> = groups.values().map(|m| m.len() as f64 * ratio).collect();
        let mut quota: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
        let mut order: Vec<usize> = (0..quota.len()).collect();
        order.sort_by(|&a, &b| {
            let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let mut remaining = train_target.saturating_sub(quota.iter().sum());
        for &g in order.iter().cycle().take(order.len() * 2) {
            if remaining == 0 {
                break;
            }
            if quota[g] < groups.values().nth(g).map_or(0, Vec::len) {
                quota[g] += 1;
                remaining -= 1;
            }
        }
        for (g, members) in groups.values().enumerate() {
            let mut m = members.clone();
            m.shuffle(&mut rng);
            train_idx.extend_from_slice(&m[..quota[g]]);
        }
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        train_idx.extend_from_slice(&all[..train_target]);
    }
    train_idx.sort_unstable();
    let in_train: HashSet<usize> = train_idx.iter().copied().collect();
    let test_idx = (0..n).filter(|i| !in_train.contains(i)).collect();
    Ok((train_idx, test_idx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn founta_mapping() -> LabelMapping {
        LabelMapping::new([
            ("hateful", LabelTarget::Hate),
            ("abusive", LabelTarget::Hate),
            ("normal", LabelTarget::Normal),
            ("spam", LabelTarget::Drop),
        ])
    }

    fn csv_opts() -> LoadOptions {
        LoadOptions {
            format: Format::Csv,
            schema: Schema::default(),
            mapping: founta_mapping(),
            anonymize: false,
            source: "founta".into(),
        }
    }

    #[test]
    fn founta_label_collapsing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        fs::write(
            &p,
            "id,text,label\n1,you idiot,hateful\n2,so vile,hateful\n3,shut up,abusive\n4,nice day,normal\n5,buy now,spam\n",
        )
        .unwrap();
        let (c, s) = load_corpus(&p, &csv_opts()).unwrap();
        assert_eq!(c.len(), 4);
        assert_eq!(c.posts().iter().filter(|p| p.label == Some(Label::Hate)).count(), 3);
        assert_eq!(s.dropped, 1);
        assert_eq!(s.raw_label_counts["hateful"], 2);
    }

    #[test]
    fn unmapped_label_aborts() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        fs::write(&p, "id,text,label\n1,a,hateful\n2,b,offensive\n").unwrap();
        match load_corpus(&p, &csv_opts()) {
            Err(CorpusError::UnmappedLabel { row, label }) => {
                assert_eq!(row, 3);
                assert_eq!(label, "offensive");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn jsonl_duplicate_id_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        fs::write(
            &p,
            "{\"id\":\"a\",\"text\":\"x\",\"label\":\"normal\"}\n{\"id\":\"a\",\"text\":\"y\",\"label\":\"normal\"}\n",
        )
        .unwrap();
        let opts = LoadOptions {
            format: Format::Jsonl,
            mapping: LabelMapping::identity(),
            ..csv_opts()
        };
        assert!(matches!(load_corpus(&p, &opts), Err(CorpusError::DuplicateId { row: 2, .. })));
    }

    #[test]
    fn numeric_labels_and_malformed_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        fs::write(&p, "{\"id\":1,\"tweet\":\"hi\",\"class\":2}\n{\"id\":2,\"class\":0}\n").unwrap();
        let opts = LoadOptions {
            format: Format::Jsonl,
            schema: Schema {
                id: Some("id".into()),
                text: "tweet".into(),
                label: Some("class".into()),
            },
            mapping: LabelMapping::new([
                ("0", LabelTarget::Hate),
                ("1", LabelTarget::Hate),
                ("2", LabelTarget::Normal),
            ]),
            anonymize: false,
            source: "davidson".into(),
        };
        assert!(matches!(load_corpus(&p, &opts), Err(CorpusError::Malformed { row: 2, .. })));
    }

    #[test]
    fn anonymize_replaces_handles() {
        assert_eq!(anonymize_handles("@user hello"), "@ANON hello");
        assert_eq!(anonymize_handles("RT @a_b: hi @c"), "RT @ANON: hi @ANON");
    }

    #[test]
    fn canonical_round_trip() {
        let c = Corpus::new(vec![
            Post { id: "1".into(), text: "a \"quoted\" post".into(), label: Some(Label::Hate), source: "s".into() },
            Post { id: "2".into(), text: "unlabeled".into(), label: None, source: "s".into() },
        ])
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        c.write_jsonl(&p).unwrap();
        assert_eq!(Corpus::read_jsonl(&p).unwrap(), c);
    }

    fn labeled(hate: usize, normal: usize) -> Corpus {
        let posts = (0..hate + normal)
            .map(|i| Post {
                id: format!("p{i}"),
                text: format!("post {i}"),
                label: Some(if i < hate { Label::Hate } else { Label::Normal }),
                source: "t".into(),
            })
            .collect();
        Corpus::new(posts).unwrap()
    }

    #[test]
    fn plain_split_sizes() {
        let (tr, te) = split(&labeled(5, 5), 0.8, 1, false).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
    }

    #[test]
    fn stratified_split_keeps_proportions() {
        let c = labeled(3, 7);
        let (tr, te) = split(&c, 0.8, 7, true).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        let hate_test = te.posts().iter().filter(|p| p.label == Some(Label::Hate)).count();
        assert!(hate_test <= 1);
        let mut all: Vec<_> = tr.ids().chain(te.ids()).map(str::to_string).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 10);
        assert_eq!(split(&c, 0.8, 7, true).unwrap(), (tr, te));
    }

    #[test]
    fn stratified_split_rejects_tiny_class() {
        assert!(matches!(split(&labeled(1, 7), 0.8, 1, true), Err(CorpusError::ClassTooSmall(Label::Hate))));
        assert!(matches!(split(&labeled(3, 3), 1.0, 1, true), Err(CorpusError::BadRatio(_))));
    }
}
