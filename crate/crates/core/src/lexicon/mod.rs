//! Versioned toxic-term lexicon: seeds, expansion candidates and review
//! decisions.

mod expand;
mod sanitize;

pub use expand::{expand, ExpansionParams, ExpansionReport};
pub use sanitize::{read_term_file, sanitize, RawList, SanitizeReport, SanitizeRules};

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const LEXICON_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no raw lexicon terms supplied")]
    EmptyInput,
    #[error("no terms survived sanitation")]
    EmptyAfterSanitize,
    #[error("lexicon has no seed or accepted terms to expand from")]
    NothingToExpand,
    #[error("threshold {0} outside (0, 1]")]
    BadThreshold(f64),
    #[error("max_candidates_per_seed must be positive")]
    BadCandidateCap,
    #[error("unknown term: {0}")]
    UnknownTerm(String),
    #[error("cannot {decision} {term:?}: current status is {status}")]
    Conflict {
        term: String,
        status: Status,
        decision: Verdict,
    },
    #[error("term {0:?} already present in lexicon")]
    Duplicate(String),
    #[error("invalid entry {term:?}: {reason}")]
    InvalidEntry { term: String, reason: String },
}

impl LexiconError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        LexiconError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Seed,
    Candidate,
    Accepted,
    Rejected,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Seed => "seed",
            Status::Candidate => "candidate",
            Status::Accepted => "accepted",
            Status::Rejected => "rejected",
        })
    }
}

/// How a candidate's evidence was obtained.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvidenceKind {
    /// Direct cosine similarity to `seed`.
    #[default]
    Cosine,
    /// Shares a graph community with `seed`; `similarity` is the strongest
    /// edge to a toxic member (0 when there is none).
    Community,
}

impl EvidenceKind {
    fn is_cosine(&self) -> bool {
        matches!(self, EvidenceKind::Cosine)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub seed: String,
    pub similarity: f64,
    #[serde(default, skip_serializing_if = "EvidenceKind::is_cosine")]
    pub via: EvidenceKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub term: String,
    pub status: Status,
    pub source: String,
    pub generation: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<Evidence>,
}

impl LexiconEntry {
    pub fn seed(term: impl Into<String>, source: impl Into<String>) -> Self {
        Self {
            term: term.into(),
            status: Status::Seed,
            source: source.into(),
            generation: 0,
            evidence: None,
        }
    }

    /// Part of the updated lexicon (seed ∪ accepted).
    pub fn is_active(&self) -> bool {
        matches!(self.status, Status::Seed | Status::Accepted)
    }

    pub fn is_phrase(&self) -> bool {
        self.term.contains(' ')
    }

    fn validate(&self) -> Result<(), LexiconError> {
        let bad = |reason: &str| LexiconError::InvalidEntry {
            term: self.term.clone(),
            reason: reason.to_string(),
        };
        if self.term.trim().is_empty() {
            return Err(bad("empty term"));
        }
        if self.term != self.term.to_lowercase() {
            return Err(bad("term is not lowercase"));
        }
        if (self.status == Status::Seed) != (self.generation == 0) {
            return Err(bad("seed status and generation 0 must coincide"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRecord {
    pub generation: u32,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Accept => "accept",
            Verdict::Reject => "reject",
        })
    }
}

impl Verdict {
    fn target(self) -> Status {
        match self {
            Verdict::Accept => Status::Accepted,
            Verdict::Reject => Status::Rejected,
        }
    }
}

/// One reviewer decision, also the decision-log line format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub term: String,
    pub decision: Verdict,
    pub reviewer: String,
    pub ts: String,
}

/// Which slice of the lexicon feeds features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LexiconView {
    Seed,
    #[default]
    Updated,
}

/// Term order fixed for feature extraction, plus its fingerprint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrozenLexicon {
    terms: Vec<String>,
    fingerprint: String,
}

impl FrozenLexicon {
    pub fn from_terms<I, S>(terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let terms: Vec<String> = terms.into_iter().map(Into::into).collect();
        let fingerprint = fingerprint_of(&terms);
        Self { terms, fingerprint }
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// SHA-256 over the ordered term list.
pub fn fingerprint_of<S: AsRef<str>>(terms: &[S]) -> String {
    let mut h = Sha256::new();
    h.update(b"adaptox-lexicon-v1\n");
    for t in terms {
        h.update(t.as_ref().as_bytes());
        h.update(b"\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconCounts {
    pub seed: usize,
    pub candidate: usize,
    pub accepted: usize,
    pub rejected: usize,
    /// |U| = seed + accepted.
    pub updated: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: u32,
    pub threshold: Option<f64>,
    pub candidate: usize,
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    entries: Vec<LexiconEntry>,
    index: HashMap<String, usize>,
    thresholds: Vec<ThresholdRecord>,
    decisions: Vec<Decision>,
}

#[derive(Serialize, Deserialize)]
struct LexiconFile {
    version: u32,
    thresholds: Vec<ThresholdRecord>,
    entries: Vec<LexiconEntry>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, entry: LexiconEntry) -> Result<(), LexiconError> {
        entry.validate()?;
        if self.index.contains_key(&entry.term) {
            return Err(LexiconError::Duplicate(entry.term));
        }
        self.index.insert(entry.term.clone(), self.entries.len());
        self.entries.push(entry);
        Ok(())
    }

    /// All entries in insertion order.
    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn get(&self, term: &str) -> Option<&LexiconEntry> {
        self.index.get(term).map(|&i| &self.entries[i])
    }

    pub fn contains(&self, term: &str) -> bool {
        self.index.contains_key(term)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn thresholds(&self) -> &[ThresholdRecord] {
        &self.thresholds
    }

    /// Decisions applied to this in-memory lexicon, in order.
    pub fn decision_history(&self) -> &[Decision] {
        &self.decisions
    }

    pub fn max_generation(&self) -> u32 {
        self.entries.iter().map(|e| e.generation).max().unwrap_or(0)
    }

    pub fn with_status(&self, status: Status) -> impl Iterator<Item = &LexiconEntry> {
        self.entries.iter().filter(move |e| e.status == status)
    }

    pub fn counts(&self) -> LexiconCounts {
        let mut c = LexiconCounts::default();
        for e in &self.entries {
            match e.status {
                Status::Seed => c.seed += 1,
                Status::Candidate => c.candidate += 1,
                Status::Accepted => c.accepted += 1,
                Status::Rejected => c.rejected += 1,
            }
        }
        c.updated = c.seed + c.accepted;
        c
    }

    pub fn generation_stats(&self) -> Vec<GenerationStats> {
        let mut by_gen: BTreeMap<u32, GenerationStats> = BTreeMap::new();
        for r in &self.thresholds {
            by_gen.entry(r.generation).or_default().threshold = Some(r.threshold);
        }
        for e in self.entries.iter().filter(|e| e.generation > 0) {
            let g = by_gen.entry(e.generation).or_default();
            match e.status {
                Status::Candidate => g.candidate += 1,
                Status::Accepted => g.accepted += 1,
                Status::Rejected => g.rejected += 1,
                Status::Seed => {}
            }
        }
        by_gen
            .into_iter()
            .map(|(generation, mut g)| {
                g.generation = generation;
                g
            })
            .collect()
    }

    /// Seeds in sanitized order, then accepted terms by (generation, term).
    pub fn freeze(&self, view: LexiconView) -> FrozenLexicon {
        let seeds = self.with_status(Status::Seed).map(|e| e.term.clone());
        match view {
            LexiconView::Seed => FrozenLexicon::from_terms(seeds),
            LexiconView::Updated => {
                let mut accepted: Vec<&LexiconEntry> = self.with_status(Status::Accepted).collect();
                accepted.sort_by(|a, b| a.generation.cmp(&b.generation).then(a.term.cmp(&b.term)));
                FrozenLexicon::from_terms(seeds.chain(accepted.into_iter().map(|e| e.term.clone())))
            }
        }
    }

    /// Inserts the candidates of an expansion round and records its threshold.
    pub fn add_candidates(&mut self, report: &ExpansionReport) -> Result<(), LexiconError> {
        for c in &report.candidates {
            if self.contains(&c.term) {
                return Err(LexiconError::Duplicate(c.term.clone()));
            }
        }
        for c in &report.candidates {
            self.insert(c.clone())?;
        }
        self.record_threshold(report.generation, report.threshold);
        Ok(())
    }

    pub fn record_threshold(&mut self, generation: u32, threshold: f64) {
        match self.thresholds.iter_mut().find(|r| r.generation == generation) {
            Some(r) => r.threshold = threshold,
            None => self.thresholds.push(ThresholdRecord {
                generation,
                threshold,
            }),
        }
    }

    /// Applies review decisions as one batch: either every decision is valid
    /// and applied, or nothing changes. Re-applying a decision that already
    /// holds is a logged no-op.
    pub fn apply_decisions(&mut self, decisions: &[Decision]) -> Result<(), LexiconError> {
        let mut pending: HashMap<&str, Status> = HashMap::new();
        for d in decisions {
            let status = match pending.get(d.term.as_str()) {
                Some(&s) => s,
                None => {
                    self.get(&d.term)
                        .ok_or_else(|| LexiconError::UnknownTerm(d.term.clone()))?
                        .status
                }
            };
            let target = d.decision.target();
            if status != Status::Candidate && status != target {
                return Err(LexiconError::Conflict {
                    term: d.term.clone(),
                    status,
                    decision: d.decision,
                });
            }
            pending.insert(&d.term, target);
        }
        for d in decisions {
            let i = self.index[&d.term];
            self.entries[i].status = d.decision.target();
            self.decisions.push(d.clone());
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        // One entry per line so parse errors can point at a line.
        let mut out = String::new();
        out.push_str("{\n");
        out.push_str(&format!("  \"version\": {LEXICON_FORMAT_VERSION},\n"));
        out.push_str(&format!(
            "  \"thresholds\": {},\n",
            serde_json::to_string(&self.thresholds).expect("thresholds serialize")
        ));
        out.push_str("  \"entries\": [");
        for (i, e) in self.entries.iter().enumerate() {
            out.push_str(if i == 0 { "\n    " } else { ",\n    " });
            out.push_str(&serde_json::to_string(e).expect("entry serializes"));
        }
        out.push_str(if self.entries.is_empty() { "]\n" } else { "\n  ]\n" });
        out.push_str("}\n");
        out
    }

    pub fn from_json(text: &str) -> Result<Self, LexiconError> {
        if text.trim().is_empty() {
            return Ok(Self::default());
        }
        let file: LexiconFile = serde_json::from_str(text).map_err(|e| LexiconError::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        if file.version != LEXICON_FORMAT_VERSION {
            return Err(LexiconError::Parse {
                line: 1,
                message: format!("unsupported lexicon version {}", file.version),
            });
        }
        let mut lex = Self {
            thresholds: file.thresholds,
            ..Self::default()
        };
        for entry in file.entries {
            let line = line_of_term(text, &entry.term, lex.contains(&entry.term));
            match lex.insert(entry) {
                Ok(()) => {}
                Err(LexiconError::Duplicate(term)) => {
                    return Err(LexiconError::Parse {
                        line,
                        message: format!("duplicate term {term:?}"),
                    })
                }
                Err(e) => {
                    return Err(LexiconError::Parse {
                        line,
                        message: e.to_string(),
                    })
                }
            }
        }
        lex.check_evidence_thresholds()?;
        Ok(lex)
    }

    fn check_evidence_thresholds(&self) -> Result<(), LexiconError> {
        for e in &self.entries {
            if !matches!(e.status, Status::Candidate | Status::Accepted) {
                continue;
            }
            let Some(rec) = self.thresholds.iter().find(|r| r.generation == e.generation) else {
                continue;
            };
            match &e.evidence {
                Some(ev) if ev.via == EvidenceKind::Cosine && ev.similarity + 1e-9 < rec.threshold => {
                    return Err(LexiconError::InvalidEntry {
                        term: e.term.clone(),
                        reason: format!(
                            "evidence similarity {} below generation {} threshold {}",
                            ev.similarity, e.generation, rec.threshold
                        ),
                    })
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), LexiconError> {
        write_atomically(path, self.to_json().as_bytes()).map_err(|e| LexiconError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        let text = fs::read_to_string(path).map_err(|e| LexiconError::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Line holding the (second, when `duplicate`) occurrence of `term`.
fn line_of_term(text: &str, term: &str, duplicate: bool) -> usize {
    let needle = format!("\"term\":{}", serde_json::to_string(term).unwrap_or_default());
    let mut seen = 0;
    for (i, line) in text.lines().enumerate() {
        let compact: String = line.chars().filter(|c| !c.is_whitespace()).collect();
        if compact.contains(&needle) {
            seen += 1;
            if !duplicate || seen == 2 {
                return i + 1;
            }
        }
    }
    0
}

/// Writes to a sibling temp file, syncs, then renames over `path`.
pub fn write_atomically(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// Append-only JSON-lines decision log.
#[derive(Debug)]
pub struct DecisionLog {
    path: PathBuf,
}

impl DecisionLog {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends and fsyncs before returning.
    pub fn append(&self, decision: &Decision) -> Result<(), LexiconError> {
        let io_err = |e| LexiconError::io(&self.path, e);
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(io_err)?;
        let mut line = serde_json::to_string(decision).expect("decision serializes");
        line.push('\n');
        f.write_all(line.as_bytes()).map_err(io_err)?;
        f.sync_all().map_err(io_err)
    }

    /// Reads every logged decision; a missing file is an empty log.
    pub fn read_all(&self) -> Result<Vec<Decision>, LexiconError> {
        let f = match File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(LexiconError::io(&self.path, e)),
        };
        let mut out = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| LexiconError::io(&self.path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line).map_err(|e| LexiconError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Ok(out)
    }
}
