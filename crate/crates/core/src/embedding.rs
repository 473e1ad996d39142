//! Word-embedding tables loaded from whitespace-separated text vectors.
//!
//! Vectors are stored in single precision; every similarity is computed in
//! double precision against a cached per-token norm.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: expected {expected} components, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("embedding file contains no vectors")]
    Empty,
    #[error("cosine similarity undefined for a zero vector")]
    ZeroVector,
    #[error("vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("token not found in embedding table: {0}")]
    NotFound(String),
}

/// Counts reported while reading a vector file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadSummary {
    pub entries: usize,
    pub duplicates: usize,
    pub zero_vectors: usize,
    pub header: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborHit {
    pub token: String,
    pub similarity: f64,
}

/// Immutable token → vector map.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dims: usize,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f32>,
    norms: Vec<f64>,
}

fn norm_of(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

/// Cosine similarity; zero vectors are a domain error rather than 0.
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64, EmbeddingError> {
    if a.len() != b.len() {
        return Err(EmbeddingError::LengthMismatch(a.len(), b.len()));
    }
    let (na, nb) = (norm_of(a), norm_of(b));
    if na == 0.0 || nb == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok(dot(a, b) / (na * nb))
}

/// Mean over in-vocabulary tokens, the only pooling currently offered.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    #[default]
    MeanOfKnownTokens,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocumentEmbedding {
    pub vector: Vec<f64>,
    pub known_tokens: usize,
    pub unknown_tokens: usize,
}

impl DocumentEmbedding {
    /// True when no token was found and the vector is the zero fallback.
    pub fn is_fallback(&self) -> bool {
        self.known_tokens == 0
    }
}

impl EmbeddingTable {
    /// Builds a table from `(token, vector)` pairs with the same keep-first and
    /// zero-vector rules as the file loader.
    pub fn from_entries<I, S>(entries: I) -> Result<(Self, LoadSummary), EmbeddingError>
    where
        I: IntoIterator<Item = (S, Vec<f32>)>,
        S: AsRef<str>,
    {
        let mut builder = Builder::new(None);
        for (i, (token, vector)) in entries.into_iter().enumerate() {
            builder.push(i + 1, token.as_ref(), vector)?;
        }
        builder.finish()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens in load order.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn vector(&self, token: &str) -> Option<&[f32]> {
        self.index.get(token).map(|&i| self.row(i))
    }

    pub fn norm(&self, token: &str) -> Option<f64> {
        self.index.get(token).map(|&i| self.norms[i])
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }

    fn sim_rows(&self, i: usize, j: usize) -> f64 {
        dot(self.row(i), self.row(j)) / (self.norms[i] * self.norms[j])
    }

    /// Cosine between two tokens of the table.
    pub fn similarity(&self, a: &str, b: &str) -> Result<f64, EmbeddingError> {
        let i = self.position(a)?;
        let j = self.position(b)?;
        Ok(self.sim_rows(i, j))
    }

    fn position(&self, token: &str) -> Result<usize, EmbeddingError> {
        self.index
            .get(token)
            .copied()
            .ok_or_else(|| EmbeddingError::NotFound(token.to_string()))
    }

    /// Exact nearest neighbours of `query`, excluding the query itself.
    pub fn neighbors(
        &self,
        query: &str,
        k: usize,
        min_similarity: f64,
    ) -> Result<Vec<NeighborHit>, EmbeddingError> {
        self.neighbors_where(query, k, min_similarity, |_| true)
    }

    /// Like [`neighbors`](Self::neighbors) but only considers tokens accepted
    /// by `keep`, so filtered tokens never use up one of the `k` slots.
    pub fn neighbors_where<F>(
        &self,
        query: &str,
        k: usize,
        min_similarity: f64,
        keep: F,
    ) -> Result<Vec<NeighborHit>, EmbeddingError>
    where
        F: Fn(&str) -> bool,
    {
        let q = self.position(query)?;
        let mut hits: Vec<(f64, usize)> = (0..self.tokens.len())
            .filter(|&i| i != q && keep(&self.tokens[i]))
            .map(|i| (self.sim_rows(q, i), i))
            .filter(|&(s, _)| s >= min_similarity)
            .collect();
        hits.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then_with(|| self.tokens[a.1].cmp(&self.tokens[b.1]))
        });
        hits.truncate(k);
        Ok(hits
            .into_iter()
            .map(|(similarity, i)| NeighborHit {
                token: self.tokens[i].clone(),
                similarity,
            })
            .collect())
    }

    pub fn document_embedding<S: AsRef<str>>(
        &self,
        tokens: &[S],
        policy: Pooling,
    ) -> DocumentEmbedding {
        match policy {
            Pooling::MeanOfKnownTokens => {
                let mut sum = vec![0.0f64; self.dims];
                let mut known = 0usize;
                for t in tokens {
                    if let Some(&i) = self.index.get(t.as_ref()) {
                        known += 1;
                        for (acc, &x) in sum.iter_mut().zip(self.row(i)) {
                            *acc += f64::from(x);
                        }
                    }
                }
                if known > 0 {
                    let n = known as f64;
                    sum.iter_mut().for_each(|x| *x /= n);
                }
                DocumentEmbedding {
                    vector: sum,
                    known_tokens: known,
                    unknown_tokens: tokens.len() - known,
                }
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbeddingError> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    /// Writes the text format without a header line. `f32` display output is
    /// the shortest representation that parses back to the same value.
    pub fn write_to<W: Write>(&self, out: &mut W) -> io::Result<()> {
        for (i, token) in self.tokens.iter().enumerate() {
            write!(out, "{token}")?;
            for x in self.row(i) {
                write!(out, " {x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

struct Builder {
    expected_dims: Option<usize>,
    dims: Option<usize>,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f32>,
    norms: Vec<f64>,
    summary: LoadSummary,
}

impl Builder {
    fn new(expected_dims: Option<usize>) -> Self {
        Self {
            expected_dims,
            dims: expected_dims,
            tokens: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
            norms: Vec::new(),
            summary: LoadSummary::default(),
        }
    }

    fn push(&mut self, line: usize, token: &str, vector: Vec<f32>) -> Result<(), EmbeddingError> {
        let token = token.trim().to_lowercase();
        if token.is_empty() || token.chars().any(char::is_whitespace) {
            return Err(EmbeddingError::Parse {
                line,
                message: "token must be non-empty and contain no whitespace".into(),
            });
        }
        match self.dims {
            Some(d) if d != vector.len() => {
                return Err(EmbeddingError::DimensionMismatch {
                    line,
                    expected: d,
                    found: vector.len(),
                })
            }
            None if vector.is_empty() => {
                return Err(EmbeddingError::Parse {
                    line,
                    message: "vector has no components".into(),
                })
            }
            None => self.dims = Some(vector.len()),
            _ => {}
        }
        if let Some(bad) = vector.iter().position(|x| !x.is_finite()) {
            return Err(EmbeddingError::Parse {
                line,
                message: format!("component {} is not finite", bad + 1),
            });
        }
        if self.index.contains_key(&token) {
            self.summary.duplicates += 1;
            return Ok(());
        }
        let norm = norm_of(&vector);
        if norm == 0.0 {
            self.summary.zero_vectors += 1;
            return Ok(());
        }
        self.index.insert(token.clone(), self.tokens.len());
        self.tokens.push(token);
        self.data.extend_from_slice(&vector);
        self.norms.push(norm);
        Ok(())
    }

    fn finish(mut self) -> Result<(EmbeddingTable, LoadSummary), EmbeddingError> {
        let dims = match self.dims {
            Some(d) if !self.tokens.is_empty() => d,
            _ => return Err(EmbeddingError::Empty),
        };
        if let Some(e) = self.expected_dims {
            debug_assert_eq!(e, dims);
        }
        self.summary.entries = self.tokens.len();
        Ok((
            EmbeddingTable {
                dims,
                tokens: self.tokens,
                index: self.index,
                data: self.data,
                norms: self.norms,
            },
            self.summary,
        ))
    }
}

fn header_fields(line: &str) -> Option<(usize, usize)> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    match fields.as_slice() {
        [a, b] => Some((a.parse().ok()?, b.parse().ok()?)),
        _ => None,
    }
}

/// Loads a vector file. A first line made of exactly two integers is taken
/// as a `COUNT DIMS` header.
pub fn load_embeddings(
    path: &Path,
    expected_dims: Option<usize>,
) -> Result<(EmbeddingTable, LoadSummary), EmbeddingError> {
    let file = File::open(path)?;
    read_embeddings(BufReader::new(file), expected_dims)
}

pub fn read_embeddings<R: BufRead>(
    reader: R,
    expected_dims: Option<usize>,
) -> Result<(EmbeddingTable, LoadSummary), EmbeddingError> {
    let mut builder = Builder::new(expected_dims);
    let mut first_record = true;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if first_record {
            first_record = false;
            if let Some((count, dims)) = header_fields(&line) {
                if let Some(e) = expected_dims {
                    if e != dims {
                        return Err(EmbeddingError::DimensionMismatch {
                            line: lineno,
                            expected: e,
                            found: dims,
                        });
                    }
                }
                builder.dims = Some(dims);
                builder.summary.header = Some((count, dims));
                continue;
            }
        }
        let mut fields = line.split_whitespace();
        let token = fields.next().unwrap_or_default();
        let vector = fields
            .map(|f| {
                f.parse::<f32>().map_err(|e| EmbeddingError::Parse {
                    line: lineno,
                    message: format!("bad component {f:?}: {e}"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        builder.push(lineno, token, vector)?;
    }
    builder.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn read(text: &str) -> Result<(EmbeddingTable, LoadSummary), EmbeddingError> {
        read_embeddings(Cursor::new(text.as_bytes()), None)
    }

    fn fixture() -> EmbeddingTable {
        read("hate 1 0\ndespise 0.9 0.2\npizza 0 1\n").unwrap().0
    }

    #[test]
    fn loads_two_entries() {
        let (t, s) = read("cat 1.0 0.0\ndog 0.0 1.0\n").unwrap();
        assert_eq!(t.dims(), 2);
        assert_eq!(t.len(), 2);
        assert_eq!(s.duplicates, 0);
    }

    #[test]
    fn dimension_mismatch_names_line() {
        match read("cat 1.0 0.0\ndog 0.5\n") {
            Err(EmbeddingError::DimensionMismatch { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn keeps_first_duplicate_after_lowercasing() {
        let (t, s) = read("Cat 1.0 0.0\ncat 2.0 0.0\n").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.vector("cat").unwrap(), &[1.0, 0.0]);
        assert_eq!(s.duplicates, 1);
    }

    #[test]
    fn header_line_is_detected() {
        let (t, s) = read("2 3\na 1 2 3\nb 3 2 1\n").unwrap();
        assert_eq!(t.dims(), 3);
        assert_eq!(s.header, Some((2, 3)));
    }

    #[test]
    fn zero_vectors_are_skipped() {
        let (t, s) = read("a 0 0\nb 1 0\n").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(s.zero_vectors, 1);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_embeddings(Path::new("/nonexistent/vectors.txt"), None).unwrap_err();
        assert!(matches!(err, EmbeddingError::Io(_)));
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let expected = 32.0 / (14f64.sqrt() * 77f64.sqrt());
        let got = cosine(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.9746).abs() < 1e-4);
        assert!(matches!(
            cosine(&[0.0, 0.0], &[1.0, 0.0]),
            Err(EmbeddingError::ZeroVector)
        ));
    }

    #[test]
    fn neighbor_examples() {
        let t = fixture();
        let hits = t.neighbors("hate", 5, 0.75).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].token, "despise");
        let expected = 0.9 / (0.81f64 + 0.04).sqrt();
        assert!((hits[0].similarity - expected).abs() < 1e-6);
        assert!((hits[0].similarity - 0.976).abs() < 1e-3);
        assert!(t.neighbors("hate", 5, 0.99).unwrap().is_empty());
        assert!(matches!(
            t.neighbors("unknownword", 5, 0.0),
            Err(EmbeddingError::NotFound(_))
        ));
    }

    #[test]
    fn neighbor_ties_break_lexicographically() {
        let (t, _) = read("q 1 0\nzeta 1 1\nalpha 1 1\n").unwrap();
        let hits = t.neighbors("q", 5, -1.0).unwrap();
        let names: Vec<_> = hits.iter().map(|h| h.token.as_str()).collect();
        assert_eq!(names, ["alpha", "zeta"]);
    }

    #[test]
    fn document_embedding_examples() {
        let (t, _) = read("cat 1.0 0.0\ndog 0.0 1.0\n").unwrap();
        let d = t.document_embedding(&["cat", "dog"], Pooling::MeanOfKnownTokens);
        assert_eq!(d.vector, vec![0.5, 0.5]);
        let d = t.document_embedding(&["cat"], Pooling::MeanOfKnownTokens);
        assert_eq!(d.vector, vec![1.0, 0.0]);
        let d = t.document_embedding(&["qqq"], Pooling::MeanOfKnownTokens);
        assert_eq!(d.vector, vec![0.0, 0.0]);
        assert_eq!(d.known_tokens, 0);
        assert!(d.is_fallback());
        let empty: [&str; 0] = [];
        assert!(t.document_embedding(&empty, Pooling::default()).is_fallback());
    }

    #[test]
    fn save_then_load_is_identical() {
        let (t, _) = read("hate 1 0\ndespise 0.9 0.2\npizza 0.333333 1e-7\n").unwrap();
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        let (back, _) = read_embeddings(Cursor::new(buf), None).unwrap();
        assert_eq!(t, back);
    }
}
