//! Tokenization and obfuscation-tolerant lexicon matching.
//!
//! Matching runs a fixed cascade per token: exact normalized form, then any
//! de-obfuscated variant (separator stripping, repeat collapsing, character
//! substitution), then bounded Damerau-Levenshtein distance.

mod distance;

pub use distance::{damerau_levenshtein, damerau_levenshtein_slices};

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::lexicon::FrozenLexicon;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub normalized: String,
    /// Character offsets `[start, end)` into the post.
    pub span: (usize, usize),
}

/// Separators removed by the stripping variant.
const JOINERS: [char; 5] = ['.', '_', '\'', '-', '*'];

fn is_token_char(c: char) -> bool {
    c.is_alphanumeric() || JOINERS.contains(&c) || matches!(c, '$' | '@' | '#')
}

fn is_edge_trim(c: char) -> bool {
    JOINERS.contains(&c) || c == '#'
}

/// Splits a post into word tokens. Mentions, URLs and the `RT` marker are
/// dropped; hashtags keep their bare word.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        chunk_tokens(&chars, start, i, &mut out);
    }
    out
}

fn chunk_tokens(chars: &[char], start: usize, end: usize, out: &mut Vec<Token>) {
    let chunk = &chars[start..end];
    let lead = chunk
        .iter()
        .position(|&c| c.is_alphanumeric() || matches!(c, '@' | '#' | '$'))
        .unwrap_or(chunk.len());
    let body: String = chunk[lead..].iter().collect();
    let lower = body.to_lowercase();
    if body.starts_with('@')
        || lower.starts_with("http://")
        || lower.starts_with("https://")
        || lower.starts_with("www.")
        || body.trim_end_matches(|c: char| !c.is_alphanumeric()) == "RT"
    {
        return;
    }
    let mut i = start;
    while i < end {
        if !is_token_char(chars[i]) {
            i += 1;
            continue;
        }
        let mut s = i;
        while i < end && is_token_char(chars[i]) {
            i += 1;
        }
        let mut e = i;
        while s < e && is_edge_trim(chars[s]) {
            s += 1;
        }
        while e > s && (is_edge_trim(chars[e - 1]) || chars[e - 1] == '@') {
            e -= 1;
        }
        if chars[s..e].iter().any(|c| c.is_alphanumeric()) {
            let surface: String = chars[s..e].iter().collect();
            out.push(Token {
                normalized: surface.to_lowercase(),
                surface,
                span: (s, e),
            });
        }
    }
}

/// Character substitution table for leetspeak-style obfuscation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Substitutions(pub BTreeMap<char, char>);

impl Default for Substitutions {
    fn default() -> Self {
        Self(
            [
                ('0', 'o'),
                ('1', 'i'),
                ('3', 'e'),
                ('4', 'a'),
                ('5', 's'),
                ('7', 't'),
                ('@', 'a'),
                ('$', 's'),
            ]
            .into_iter()
            .collect(),
        )
    }
}

impl Substitutions {
    fn apply(&self, s: &str) -> String {
        s.chars().map(|c| *self.0.get(&c).unwrap_or(&c)).collect()
    }
}

fn strip_joiners(s: &str) -> String {
    s.chars().filter(|c| !JOINERS.contains(c) && !c.is_whitespace()).collect()
}

/// Shortens every run of one repeated character longer than `max_run`.
fn collapse_runs(s: &str, max_run: usize) -> String {
    let mut out = String::with_capacity(s.len());
    let mut prev = None;
    let mut run = 0;
    for c in s.chars() {
        if Some(c) == prev {
            run += 1;
        } else {
            prev = Some(c);
            run = 1;
        }
        if run <= max_run {
            out.push(c);
        }
    }
    out
}

fn has_run(s: &str, len: usize) -> bool {
    let mut prev = None;
    let mut run = 0;
    for c in s.chars() {
        run = if Some(c) == prev { run + 1 } else { 1 };
        prev = Some(c);
        if run >= len {
            return true;
        }
    }
    false
}

/// Candidate normalized forms of `normalized`, identity first, without
/// duplicates or empty strings.
pub fn variants_of(normalized: &str, subs: &Substitutions) -> Vec<String> {
    let stripped = strip_joiners(normalized);
    let base = if stripped.is_empty() { normalized.to_string() } else { stripped.clone() };
    let leet = subs.apply(&base);
    let candidates = [
        normalized.to_string(),
        stripped,
        collapse_runs(&base, 2),
        collapse_runs(&base, 1),
        collapse_runs(&leet, 2),
        collapse_runs(&leet, 1),
        leet,
    ];
    let mut out: Vec<String> = Vec::with_capacity(candidates.len());
    for c in candidates {
        if !c.is_empty() && !out.contains(&c) {
            out.push(c);
        }
    }
    out
}

pub fn variants(token: &Token, subs: &Substitutions) -> Vec<String> {
    variants_of(&token.normalized, subs)
}

/// Term-length → maximum allowed distance, e.g. `[{min_len: 5, max_distance: 1}]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistanceTier {
    pub min_len: usize,
    pub max_distance: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FuzzyPolicy {
    pub tiers: Vec<DistanceTier>,
    /// Terms at least this long (and below every tier) still match a token
    /// that is the term with exactly one vowel removed ("fck" for "fuck").
    #[serde(default)]
    pub vowel_drop_min_len: Option<usize>,
}

impl Default for FuzzyPolicy {
    fn default() -> Self {
        Self {
            tiers: vec![DistanceTier {
                min_len: 5,
                max_distance: 1,
            }],
            vowel_drop_min_len: Some(4),
        }
    }
}

impl FuzzyPolicy {
    pub fn max_distance(&self, term_len: usize) -> usize {
        self.tiers
            .iter()
            .filter(|t| term_len >= t.min_len)
            .map(|t| t.max_distance)
            .max()
            .unwrap_or(0)
    }

    fn widest(&self) -> usize {
        self.tiers.iter().map(|t| t.max_distance).max().unwrap_or(0).max(1)
    }

    fn vowel_drop_applies(&self, term_len: usize) -> bool {
        self.vowel_drop_min_len.is_some_and(|m| term_len >= m)
    }

    /// Largest distance a fuzzy match against a term of this length may have.
    pub fn allowed(&self, term_len: usize) -> usize {
        let d = self.max_distance(term_len);
        if d == 0 && self.vowel_drop_applies(term_len) {
            1
        } else {
            d
        }
    }
}

fn is_vowel_drop(token: &[char], term: &[char]) -> bool {
    if token.len() + 1 != term.len() {
        return false;
    }
    (0..term.len()).any(|i| {
        matches!(term[i], 'a' | 'e' | 'i' | 'o' | 'u')
            && term[..i] == token[..i]
            && term[i + 1..] == token[i..]
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizerConfig {
    #[serde(default)]
    pub substitutions: Substitutions,
    #[serde(default)]
    pub fuzzy: FuzzyPolicy,
    #[serde(default = "yes")]
    pub deobfuscate: bool,
    #[serde(default = "yes")]
    pub fuzzy_enabled: bool,
}

fn yes() -> bool {
    true
}

impl Default for NormalizerConfig {
    fn default() -> Self {
        Self {
            substitutions: Substitutions::default(),
            fuzzy: FuzzyPolicy::default(),
            deobfuscate: true,
            fuzzy_enabled: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchKind {
    Exact,
    Deobfuscated,
    Fuzzy,
}

/// A token-independent match outcome, cacheable per normalized form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermMatch {
    pub term_index: usize,
    pub kind: MatchKind,
    pub edit_distance: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub token: Token,
    pub lexicon_term: String,
    pub term_index: usize,
    pub kind: MatchKind,
    pub edit_distance: usize,
}

/// Matches tokens against a frozen term list.
#[derive(Debug, Clone)]
pub struct Matcher {
    terms: Vec<String>,
    term_chars: Vec<Vec<char>>,
    singles: HashMap<String, usize>,
    /// Run-collapsed term → first term with that key.
    collapsed: HashMap<String, usize>,
    phrases: Vec<(usize, Vec<String>)>,
    by_len: BTreeMap<usize, Vec<usize>>,
    config: NormalizerConfig,
}

impl Matcher {
    pub fn new(lexicon: &FrozenLexicon, config: NormalizerConfig) -> Self {
        Self::from_terms(lexicon.terms(), config)
    }

    pub fn from_terms<S: AsRef<str>>(terms: &[S], config: NormalizerConfig) -> Self {
        let terms: Vec<String> = terms.iter().map(|t| t.as_ref().to_string()).collect();
        let mut singles = HashMap::new();
        let mut collapsed = HashMap::new();
        let mut phrases = Vec::new();
        let mut by_len: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let term_chars: Vec<Vec<char>> = terms.iter().map(|t| t.chars().collect()).collect();
        for (i, t) in terms.iter().enumerate() {
            if t.contains(' ') {
                phrases.push((i, t.split(' ').map(str::to_string).collect()));
            } else {
                singles.entry(t.clone()).or_insert(i);
                collapsed.entry(collapse_runs(t, 1)).or_insert(i);
                by_len.entry(term_chars[i].len()).or_default().push(i);
            }
        }
        Self {
            terms,
            term_chars,
            singles,
            collapsed,
            phrases,
            by_len,
            config,
        }
    }

    pub fn config(&self) -> &NormalizerConfig {
        &self.config
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    fn variants(&self, normalized: &str) -> Vec<String> {
        if self.config.deobfuscate {
            variants_of(normalized, &self.config.substitutions)
        } else {
            vec![normalized.to_string()]
        }
    }

    /// Cascade on a normalized form: exact, de-obfuscated, then fuzzy with
    /// the smallest distance (ties to the lexicographically smallest term).
    pub fn match_normalized(&self, normalized: &str) -> Option<TermMatch> {
        if let Some(&i) = self.singles.get(normalized) {
            return Some(TermMatch { term_index: i, kind: MatchKind::Exact, edit_distance: 0 });
        }
        let variants = self.variants(normalized);
        for v in variants.iter().skip(1) {
            if let Some(&i) = self.singles.get(v) {
                return Some(TermMatch {
                    term_index: i,
                    kind: MatchKind::Deobfuscated,
                    edit_distance: 0,
                });
            }
        }
        // A run of three or more marks deliberate stretching, so the term's
        // own double letters may be folded as well ("kiiill" for "kill").
        if self.config.deobfuscate {
            for v in variants.iter().filter(|v| has_run(v, 3)) {
                if let Some(&i) = self.collapsed.get(&collapse_runs(v, 1)) {
                    return Some(TermMatch {
                        term_index: i,
                        kind: MatchKind::Deobfuscated,
                        edit_distance: 0,
                    });
                }
            }
        }
        if !self.config.fuzzy_enabled {
            return None;
        }
        let policy = &self.config.fuzzy;
        let reach = policy.widest();
        let mut best: Option<(usize, usize)> = None;
        for v in &variants {
            let vc: Vec<char> = v.chars().collect();
            let lo = vc.len().saturating_sub(reach);
            for (&len, idxs) in self.by_len.range(lo..=vc.len() + reach) {
                let allowed = policy.allowed(len);
                if allowed == 0 || vc.len().abs_diff(len) > allowed {
                    continue;
                }
                let tiered = policy.max_distance(len);
                for &i in idxs {
                    let tc = &self.term_chars[i];
                    let d = if tiered > 0 {
                        damerau_levenshtein_slices(&vc, tc)
                    } else if is_vowel_drop(&vc, tc) {
                        1
                    } else {
                        continue;
                    };
                    if d == 0 || d > allowed {
                        continue;
                    }
                    let better = match best {
                        None => true,
                        Some((bi, bd)) => d < bd || (d == bd && self.terms[i] < self.terms[bi]),
                    };
                    if better {
                        best = Some((i, d));
                    }
                }
            }
        }
        best.map(|(term_index, edit_distance)| TermMatch {
            term_index,
            kind: MatchKind::Fuzzy,
            edit_distance,
        })
    }

    pub fn match_token(&self, token: &Token) -> Option<MatchResult> {
        self.match_normalized(&token.normalized).map(|m| self.result(token.clone(), m))
    }

    fn result(&self, token: Token, m: TermMatch) -> MatchResult {
        MatchResult {
            token,
            lexicon_term: self.terms[m.term_index].clone(),
            term_index: m.term_index,
            kind: m.kind,
            edit_distance: m.edit_distance,
        }
    }

    /// Every single-token match plus multi-word term matches over
    /// consecutive tokens, in token order.
    pub fn match_tokens(&self, tokens: &[Token], text: &str) -> Vec<MatchResult> {
        let mut cache = HashMap::new();
        self.match_tokens_cached(tokens, text, &mut cache)
    }

    pub fn match_tokens_cached(
        &self,
        tokens: &[Token],
        text: &str,
        cache: &mut HashMap<String, Option<TermMatch>>,
    ) -> Vec<MatchResult> {
        let mut out = Vec::new();
        for t in tokens {
            let m = cache
                .entry(t.normalized.clone())
                .or_insert_with(|| self.match_normalized(&t.normalized))
                .clone();
            if let Some(m) = m {
                out.push(self.result(t.clone(), m));
            }
        }
        if !self.phrases.is_empty() {
            let variant_sets: Vec<Vec<String>> = tokens.iter().map(|t| self.variants(&t.normalized)).collect();
            let chars: Vec<char> = text.chars().collect();
            for (term_index, words) in &self.phrases {
                for start in 0..tokens.len().saturating_sub(words.len() - 1) {
                    let window = start..start + words.len();
                    let all = window.clone().zip(words).all(|(k, w)| variant_sets[k].contains(w));
                    if !all {
                        continue;
                    }
                    let exact = window.clone().zip(words).all(|(k, w)| tokens[k].normalized == *w);
                    let span = (tokens[start].span.0, tokens[window.end - 1].span.1);
                    let surface: String = chars[span.0..span.1].iter().collect();
                    out.push(MatchResult {
                        token: Token { normalized: surface.to_lowercase(), surface, span },
                        lexicon_term: self.terms[*term_index].clone(),
                        term_index: *term_index,
                        kind: if exact { MatchKind::Exact } else { MatchKind::Deobfuscated },
                        edit_distance: 0,
                    });
                }
            }
            out.sort_by_key(|m| (m.token.span, m.term_index));
        }
        out
    }
}
