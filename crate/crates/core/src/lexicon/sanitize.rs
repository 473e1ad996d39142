use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Lexicon, LexiconEntry, LexiconError};

/// One published word list and the label recorded as provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawList {
    pub source: String,
    pub terms: Vec<String>,
}

impl RawList {
    pub fn new<I, S>(source: impl Into<String>, terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            source: source.into(),
            terms: terms.into_iter().map(Into::into).collect(),
        }
    }
}

/// Stopword, contextual-blocklist and optional English wordlist sets.
#[derive(Debug, Clone, Default)]
pub struct SanitizeRules {
    pub stopwords: HashSet<String>,
    pub contextual: HashSet<String>,
    pub wordlist: Option<HashSet<String>>,
}

impl SanitizeRules {
    pub fn from_files(
        stopwords: &Path,
        contextual: &Path,
        wordlist: Option<&Path>,
    ) -> Result<Self, LexiconError> {
        Ok(Self {
            stopwords: read_term_file(stopwords)?.into_iter().collect(),
            contextual: read_term_file(contextual)?.into_iter().collect(),
            wordlist: wordlist
                .map(|p| read_term_file(p).map(|v| v.into_iter().collect()))
                .transpose()?,
        })
    }

    fn is_english(&self, term: &str) -> bool {
        term.split(' ').all(|w| {
            alphabet_ok(w)
                && self
                    .wordlist
                    .as_ref()
                    .is_none_or(|list| base_forms(w).any(|f| list.contains(f)))
        })
    }
}

/// One term per line; `#` starts a comment; terms are trimmed and lowercased.
pub fn read_term_file(path: &Path) -> Result<Vec<String>, LexiconError> {
    let text = fs::read_to_string(path).map_err(|e| LexiconError::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect())
}

/// `[a-z][a-z'-]*`
fn alphabet_ok(word: &str) -> bool {
    let mut chars = word.chars();
    matches!(chars.next(), Some('a'..='z')) && chars.all(|c| matches!(c, 'a'..='z' | '\'' | '-'))
}

/// The word itself followed by forms with one common inflection removed.
fn base_forms(word: &str) -> impl Iterator<Item = &str> {
    const SUFFIXES: [&str; 7] = ["'s", "s", "es", "ed", "ing", "er", "ers"];
    std::iter::once(word).chain(
        SUFFIXES
            .iter()
            .filter_map(move |s| word.strip_suffix(s))
            .filter(|b| b.len() >= 2),
    )
}

fn normalize_spacing(term: &str) -> String {
    term.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SanitizeReport {
    pub input_terms: usize,
    pub non_english: usize,
    pub duplicates: usize,
    pub stopwords: usize,
    pub contextual: usize,
    pub kept: usize,
}

/// Turns raw word lists into a seed lexicon.
///
/// Rules run in order: the English/alphabet rule (checked on the lowercased
/// form), lowercasing, cross-list deduplication where the first source wins,
/// then stopword and contextual-blocklist removal.
pub fn sanitize(
    raw: &[RawList],
    rules: &SanitizeRules,
) -> Result<(Lexicon, SanitizeReport), LexiconError> {
    let total: usize = raw.iter().map(|l| l.terms.len()).sum();
    if total == 0 {
        return Err(LexiconError::EmptyInput);
    }
    let mut report = SanitizeReport {
        input_terms: total,
        ..SanitizeReport::default()
    };
    let mut seen = HashSet::new();
    let mut lexicon = Lexicon::new();
    for list in raw {
        for original in &list.terms {
            let term = normalize_spacing(&original.to_lowercase());
            if term.is_empty() || !rules.is_english(&term) {
                report.non_english += 1;
                continue;
            }
            if !seen.insert(term.clone()) {
                report.duplicates += 1;
                continue;
            }
            if rules.stopwords.contains(&term) {
                report.stopwords += 1;
                continue;
            }
            if rules.contextual.contains(&term) {
                report.contextual += 1;
                continue;
            }
            lexicon.insert(LexiconEntry::seed(term, list.source.clone()))?;
        }
    }
    report.kept = lexicon.len();
    if lexicon.is_empty() {
        return Err(LexiconError::EmptyAfterSanitize);
    }
    Ok((lexicon, report))
}
