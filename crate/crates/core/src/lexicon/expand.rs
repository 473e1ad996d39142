use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Evidence, EvidenceKind, Lexicon, LexiconEntry, LexiconError, Status};
use crate::embedding::EmbeddingTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionParams {
    pub threshold: f64,
    pub max_candidates_per_seed: usize,
    /// Provenance label written on every candidate.
    pub source: String,
}

impl Default for ExpansionParams {
    fn default() -> Self {
        Self {
            threshold: 0.75,
            max_candidates_per_seed: 25,
            source: "embedding-expansion".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub generation: u32,
    pub threshold: f64,
    pub sources_used: usize,
    /// Seed/accepted single-word terms with no vector in the table.
    pub missing_sources: Vec<String>,
    /// Multi-word terms, which are never expansion sources.
    pub skipped_phrases: usize,
    pub candidates: Vec<LexiconEntry>,
}

/// Proposes new candidate terms whose cosine similarity to some seed or
/// accepted term reaches `threshold`.
///
/// Each source nominates its `max_candidates_per_seed` most similar tokens
/// that are not yet in the lexicon under any status. A nominated token's
/// evidence is its best source overall. Candidates come back sorted by
/// similarity, highest first.
pub fn expand(
    lexicon: &Lexicon,
    table: &EmbeddingTable,
    params: &ExpansionParams,
) -> Result<ExpansionReport, LexiconError> {
    if !(params.threshold > 0.0 && params.threshold <= 1.0) {
        return Err(LexiconError::BadThreshold(params.threshold));
    }
    if params.max_candidates_per_seed == 0 {
        return Err(LexiconError::BadCandidateCap);
    }
    let active: Vec<&LexiconEntry> = lexicon.entries().iter().filter(|e| e.is_active()).collect();
    if active.is_empty() {
        return Err(LexiconError::NothingToExpand);
    }

    let mut sources = Vec::new();
    let mut missing_sources = Vec::new();
    let mut skipped_phrases = 0;
    for e in active {
        if e.is_phrase() {
            skipped_phrases += 1;
        } else if table.contains(&e.term) {
            sources.push(e.term.as_str());
        } else {
            missing_sources.push(e.term.clone());
        }
    }

    let mut nominated = BTreeSet::new();
    for &s in &sources {
        let hits = table
            .neighbors_where(s, params.max_candidates_per_seed, params.threshold, |t| {
                !lexicon.contains(t)
            })
            .expect("source checked present");
        for h in hits {
            nominated.insert(h.token);
        }
    }

    let generation = lexicon.max_generation() + 1;
    let mut candidates: Vec<LexiconEntry> = nominated
        .into_iter()
        .map(|term| {
            let (seed, similarity) = best_source(table, &term, &sources);
            LexiconEntry {
                term,
                status: Status::Candidate,
                source: params.source.clone(),
                generation,
                evidence: Some(Evidence {
                    seed: seed.to_string(),
                    similarity,
                    via: EvidenceKind::Cosine,
                }),
            }
        })
        .collect();
    candidates.sort_by(|a, b| {
        let sa = a.evidence.as_ref().map_or(0.0, |e| e.similarity);
        let sb = b.evidence.as_ref().map_or(0.0, |e| e.similarity);
        sb.total_cmp(&sa).then_with(|| a.term.cmp(&b.term))
    });

    Ok(ExpansionReport {
        generation,
        threshold: params.threshold,
        sources_used: sources.len(),
        missing_sources,
        skipped_phrases,
        candidates,
    })
}

/// Highest-similarity source; ties go to the lexicographically smallest.
fn best_source<'a>(table: &EmbeddingTable, term: &str, sources: &[&'a str]) -> (&'a str, f64) {
    let mut best: Option<(&str, f64)> = None;
    for &s in sources {
        let sim = table.similarity(term, s).expect("both present");
        best = match best {
            Some((bs, bsim)) if bsim > sim || (bsim == sim && bs <= s) => Some((bs, bsim)),
            _ => Some((s, sim)),
        };
    }
    best.expect("at least one source nominated the term")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{Decision, Verdict};

    fn table() -> EmbeddingTable {
        EmbeddingTable::from_entries([
            ("hate", vec![1.0, 0.0]),
            ("despise", vec![0.9, 0.2]),
            ("loathe", vec![0.6, 0.8]),
            ("pizza", vec![0.0, 1.0]),
        ])
        .unwrap()
        .0
    }

    fn seeds(terms: &[&str]) -> Lexicon {
        let mut lex = Lexicon::new();
        for t in terms {
            lex.insert(LexiconEntry::seed(*t, "test")).unwrap();
        }
        lex
    }

    #[test]
    fn fixture_yields_despise_only() {
        let r = expand(&seeds(&["hate"]), &table(), &ExpansionParams::default()).unwrap();
        assert_eq!(r.candidates.len(), 1);
        let c = &r.candidates[0];
        assert_eq!(c.term, "despise");
        assert_eq!(c.generation, 1);
        let ev = c.evidence.as_ref().unwrap();
        assert_eq!(ev.seed, "hate");
        assert!((ev.similarity - 0.976).abs() < 1e-3);
    }

    #[test]
    fn threshold_one_without_duplicate_vectors_is_empty() {
        let p = ExpansionParams {
            threshold: 1.0,
            ..ExpansionParams::default()
        };
        assert!(expand(&seeds(&["hate"]), &table(), &p).unwrap().candidates.is_empty());
    }

    #[test]
    fn accepted_terms_become_sources() {
        let mut lex = seeds(&["hate"]);
        let r = expand(&lex, &table(), &ExpansionParams::default()).unwrap();
        lex.add_candidates(&r).unwrap();
        lex.apply_decisions(&[Decision {
            term: "despise".into(),
            decision: Verdict::Accept,
            reviewer: "r".into(),
            ts: "t".into(),
        }])
        .unwrap();
        // loathe vs despise by hand: (0.54 + 0.16) / sqrt(0.85) = 0.7593
        let t = table();
        let to_despise = t.similarity("loathe", "despise").unwrap();
        assert!((to_despise - 0.70 / 0.85f64.sqrt()).abs() < 1e-6);
        let r2 = expand(&lex, &t, &ExpansionParams::default()).unwrap();
        let names: Vec<_> = r2.candidates.iter().map(|c| c.term.as_str()).collect();
        assert_eq!(names, ["loathe"]);
        assert_eq!(r2.candidates[0].evidence.as_ref().unwrap().seed, "despise");
        assert_eq!(r2.generation, 2);
    }

    #[test]
    fn rejected_terms_are_never_proposed_again() {
        let mut lex = seeds(&["hate"]);
        let r = expand(&lex, &table(), &ExpansionParams::default()).unwrap();
        lex.add_candidates(&r).unwrap();
        lex.apply_decisions(&[Decision {
            term: "despise".into(),
            decision: Verdict::Reject,
            reviewer: "r".into(),
            ts: "t".into(),
        }])
        .unwrap();
        let r2 = expand(&lex, &table(), &ExpansionParams::default()).unwrap();
        assert!(r2.candidates.is_empty());
    }

    #[test]
    fn missing_and_phrase_sources_are_counted() {
        let lex = seeds(&["hate", "absentword", "dirty word"]);
        let r = expand(&lex, &table(), &ExpansionParams::default()).unwrap();
        assert_eq!(r.missing_sources, ["absentword"]);
        assert_eq!(r.skipped_phrases, 1);
        assert_eq!(r.sources_used, 1);
    }

    #[test]
    fn bad_parameters() {
        let lex = seeds(&["hate"]);
        for th in [0.0, 1.5, f64::NAN] {
            let p = ExpansionParams {
                threshold: th,
                ..ExpansionParams::default()
            };
            assert!(matches!(expand(&lex, &table(), &p), Err(LexiconError::BadThreshold(_))));
        }
        assert!(matches!(
            expand(&Lexicon::new(), &table(), &ExpansionParams::default()),
            Err(LexiconError::NothingToExpand)
        ));
    }

    #[test]
    fn per_seed_cap_truncates_by_rank() {
        let t = EmbeddingTable::from_entries([
            ("s", vec![1.0, 0.0]),
            ("a", vec![1.0, 0.1]),
            ("b", vec![1.0, 0.2]),
            ("c", vec![1.0, 0.3]),
        ])
        .unwrap()
        .0;
        let p = ExpansionParams {
            max_candidates_per_seed: 2,
            ..ExpansionParams::default()
        };
        let r = expand(&seeds(&["s"]), &t, &p).unwrap();
        let names: Vec<_> = r.candidates.iter().map(|c| c.term.as_str()).collect();
        assert_eq!(names, ["a", "b"]);
    }
}
