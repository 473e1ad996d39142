//! Hybrid feature vectors: binary lexicon-presence flags followed by a dense
//! document embedding.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Label};
use crate::embedding::{EmbeddingTable, Pooling};
use crate::lexicon::FrozenLexicon;
use crate::normalize::{tokenize, variants_of, MatchResult, Matcher, NormalizerConfig, TermMatch};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("{path} line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("no external vector for post {0}")]
    MissingVector(String),
    #[error("post {id}: dense vector has {found} components, expected {expected}")]
    DimsMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("post {id}: {source}")]
    Post {
        id: String,
        #[source]
        source: Box<FeatureError>,
    },
    #[error("feature matrix is malformed: {0}")]
    Malformed(String),
}

/// Per-post vectors computed out-of-band (e.g. transformer embeddings).
/// On disk: a `{"dims": d}` header line, then `{"id": .., "vector": [..]}` lines.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExternalVectors {
    dims: usize,
    vectors: HashMap<String, Vec<f64>>,
}

#[derive(Deserialize)]
struct ExternalHeader {
    dims: usize,
}

#[derive(Serialize, Deserialize)]
struct ExternalRow {
    id: String,
    vector: Vec<f64>,
}

impl ExternalVectors {
    pub fn new(dims: usize) -> Self {
        Self {
            dims,
            vectors: HashMap::new(),
        }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: Vec<f64>) -> Result<(), FeatureError> {
        let id = id.into();
        if vector.len() != self.dims {
            return Err(FeatureError::DimsMismatch {
                id,
                expected: self.dims,
                found: vector.len(),
            });
        }
        self.vectors.insert(id, vector);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.vectors.get(id).map(Vec::as_slice)
    }

    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        let parse = |line: usize, message: String| FeatureError::Parse {
            path: path.display().to_string(),
            line,
            message,
        };
        let reader = BufReader::new(File::open(path)?);
        let mut out: Option<Self> = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match out.as_mut() {
                None => {
                    let h: ExternalHeader =
                        serde_json::from_str(&line).map_err(|e| parse(i + 1, format!("header: {e}")))?;
                    out = Some(Self::new(h.dims));
                }
                Some(vs) => {
                    let row: ExternalRow =
                        serde_json::from_str(&line).map_err(|e| parse(i + 1, e.to_string()))?;
                    if row.vector.iter().any(|x| !x.is_finite()) {
                        return Err(parse(i + 1, "non-finite component".into()));
                    }
                    vs.insert(row.id, row.vector)?;
                }
            }
        }
        out.ok_or_else(|| parse(1, "missing {\"dims\": ..} header".into()))
    }

    pub fn save(&self, path: &Path) -> Result<(), FeatureError> {
        let mut out = io::BufWriter::new(File::create(path)?);
        writeln!(out, "{{\"dims\":{}}}", self.dims)?;
        let sorted: BTreeMap<&String, &Vec<f64>> = self.vectors.iter().collect();
        for (id, v) in sorted {
            let row = ExternalRow {
                id: id.clone(),
                vector: v.clone(),
            };
            writeln!(out, "{}", serde_json::to_string(&row).expect("row serializes"))?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub enum DenseSource<'a> {
    /// Pooled word vectors of the post's tokens.
    Table(&'a EmbeddingTable, Pooling),
    External(&'a ExternalVectors),
}

impl DenseSource<'_> {
    pub fn dims(&self) -> usize {
        match self {
            DenseSource::Table(t, _) => t.dims(),
            DenseSource::External(e) => e.dims(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub matches: Vec<MatchResult>,
    /// Tokens with a table vector; 0 for external dense vectors.
    pub known_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub flags: Vec<bool>,
    pub dense: Vec<f64>,
    pub meta: FeatureMeta,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.flags.len() + self.dense.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flags as 0/1 followed by the dense block.
    pub fn values(&self) -> Vec<f64> {
        self.flags
            .iter()
            .map(|&f| if f { 1.0 } else { 0.0 })
            .chain(self.dense.iter().copied())
            .collect()
    }
}

/// Extracts features for many posts against one frozen lexicon, caching
/// match results per normalized token.
pub struct Extractor<'a> {
    lexicon: &'a FrozenLexicon,
    matcher: Matcher,
    dense: DenseSource<'a>,
    cache: HashMap<String, Option<TermMatch>>,
}

impl<'a> Extractor<'a> {
    pub fn new(lexicon: &'a FrozenLexicon, config: NormalizerConfig, dense: DenseSource<'a>) -> Self {
        Self {
            matcher: Matcher::new(lexicon, config),
            lexicon,
            dense,
            cache: HashMap::new(),
        }
    }

    pub fn matcher(&self) -> &Matcher {
        &self.matcher
    }

    pub fn extract(&mut self, id: &str, text: &str) -> Result<FeatureVector, FeatureError> {
        let tokens = tokenize(text);
        let matches = self.matcher.match_tokens_cached(&tokens, text, &mut self.cache);
        let mut flags = vec![false; self.lexicon.len()];
        for m in &matches {
            flags[m.term_index] = true;
        }
        let (dense, known_tokens) = match self.dense {
            DenseSource::Table(table, pooling) => {
                let subs = &self.matcher.config().substitutions;
                // An obfuscated token pools the first of its variants the table knows.
                let words: Vec<String> = tokens
                    .iter()
                    .map(|t| {
                        variants_of(&t.normalized, subs)
                            .into_iter()
                            .find(|v| table.contains(v))
                            .unwrap_or_else(|| t.normalized.clone())
                    })
                    .collect();
                let d = table.document_embedding(&words, pooling);
                (d.vector, d.known_tokens)
            }
            DenseSource::External(ext) => {
                let v = ext.get(id).ok_or_else(|| FeatureError::MissingVector(id.to_string()))?;
                (v.to_vec(), 0)
            }
        };
        Ok(FeatureVector {
            flags,
            dense,
            meta: FeatureMeta {
                matches,
                known_tokens,
            },
        })
    }
}

/// One-shot extraction for a single post.
pub fn extract(
    id: &str,
    text: &str,
    lexicon: &FrozenLexicon,
    config: &NormalizerConfig,
    dense: DenseSource<'_>,
) -> Result<FeatureVector, FeatureError> {
    Extractor::new(lexicon, config.clone(), dense).extract(id, text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub fingerprint: String,
    pub terms: Vec<String>,
    pub dims: usize,
    pub ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<Label>>,
    pub rows: Vec<FeatureVector>,
}

impl FeatureMatrix {
    pub fn width(&self) -> usize {
        self.terms.len() + self.dims
    }

    pub fn flag_count(&self) -> usize {
        self.terms.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            fingerprint: self.fingerprint.clone(),
            terms: self.terms.clone(),
            dims: self.dims,
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            labels: self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    pub fn design(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(FeatureVector::values).collect()
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        let bad = |m: String| Err(FeatureError::Malformed(m));
        if self.ids.len() != self.rows.len() {
            return bad(format!("{} ids for {} rows", self.ids.len(), self.rows.len()));
        }
        if let Some(l) = &self.labels {
            if l.len() != self.rows.len() {
                return bad(format!("{} labels for {} rows", l.len(), self.rows.len()));
            }
        }
        if crate::lexicon::fingerprint_of(&self.terms) != self.fingerprint {
            return bad("fingerprint does not match the term list".into());
        }
        for (id, r) in self.ids.iter().zip(&self.rows) {
            if r.flags.len() != self.terms.len() || r.dense.len() != self.dims {
                return bad(format!("row {id} has the wrong width"));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), FeatureError> {
        let json = serde_json::to_string(self).expect("matrix serializes");
        crate::lexicon::write_atomically(path, json.as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        let text = std::fs::read_to_string(path)?;
        let m: Self = serde_json::from_str(&text).map_err(|e| FeatureError::Parse {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        m.validate()?;
        Ok(m)
    }

    /// Dense CSV with header `flag_<term>.., d0..d{dims-1}, label`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), FeatureError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = self.terms.iter().map(|t| format!("flag_{t}")).collect();
        header.extend((0..self.dims).map(|i| format!("d{i}")));
        if self.labels.is_some() {
            header.push("label".into());
        }
        w.write_record(&header).map_err(csv_io)?;
        for (i, r) in self.rows.iter().enumerate() {
            let mut rec: Vec<String> = r.flags.iter().map(|&f| u8::from(f).to_string()).collect();
            rec.extend(r.dense.iter().map(f64::to_string));
            if let Some(l) = &self.labels {
                rec.push(l[i].as_str().to_string());
            }
            w.write_record(&rec).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> FeatureError {
    FeatureError::Io(io::Error::other(e))
}

/// One row per post, in corpus order.
pub fn build_matrix(
    corpus: &Corpus,
    lexicon: &FrozenLexicon,
    config: &NormalizerConfig,
    dense: DenseSource<'_>,
) -> Result<FeatureMatrix, FeatureError> {
    let mut ex = Extractor::new(lexicon, config.clone(), dense);
    let mut rows = Vec::with_capacity(corpus.len());
    for p in corpus.posts() {
        let row = ex.extract(&p.id, &p.text).map_err(|e| FeatureError::Post {
            id: p.id.clone(),
            source: Box::new(e),
        })?;
        rows.push(row);
    }
    Ok(FeatureMatrix {
        fingerprint: lexicon.fingerprint().to_string(),
        terms: lexicon.terms().to_vec(),
        dims: dense.dims(),
        ids: corpus.ids().map(str::to_string).collect(),
        labels: corpus.labels(),
        rows,
    })
}
