//! Confusion-matrix metrics and labeling comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Label};

#[derive(Debug, Error, PartialEq)]
pub enum EvaluationError {
    #[error("predictions ({0}) and gold labels ({1}) differ in length")]
    LengthMismatch(usize, usize),
    #[error("cannot evaluate zero samples")]
    Empty,
    #[error("unknown label symbol {0:?}")]
    UnknownLabel(String),
    #[error("labeling {which} is missing ids: {ids:?}")]
    MissingIds { which: &'static str, ids: Vec<String> },
}

/// Counts with "hate" as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub confusion: Confusion,
    pub accuracy: f64,
    pub hate: ClassMetrics,
    pub normal: ClassMetrics,
    pub macro_f1: f64,
    /// Metrics that hit 0/0 and were set to 0, e.g. `"hate.precision"`.
    pub degenerate: Vec<String>,
}

fn ratio(num: usize, den: usize, name: &str, flags: &mut Vec<String>) -> f64 {
    if den == 0 {
        flags.push(name.to_string());
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64, name: &str, flags: &mut Vec<String>) -> f64 {
    if p + r == 0.0 {
        flags.push(name.to_string());
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl EvaluationReport {
    /// All metrics derive from the counts alone.
    pub fn from_confusion(c: Confusion) -> Self {
        let mut flags = Vec::new();
        let hp = ratio(c.tp, c.tp + c.fp, "hate.precision", &mut flags);
        let hr = ratio(c.tp, c.tp + c.fn_, "hate.recall", &mut flags);
        let hf = f1(hp, hr, "hate.f1", &mut flags);
        let np = ratio(c.tn, c.tn + c.fn_, "normal.precision", &mut flags);
        let nr = ratio(c.tn, c.tn + c.fp, "normal.recall", &mut flags);
        let nf = f1(np, nr, "normal.f1", &mut flags);
        let n = c.total();
        Self {
            confusion: c,
            accuracy: if n == 0 { 0.0 } else { (c.tp + c.tn) as f64 / n as f64 },
            hate: ClassMetrics { precision: hp, recall: hr, f1: hf },
            normal: ClassMetrics { precision: np, recall: nr, f1: nf },
            macro_f1: (hf + nf) / 2.0,
            degenerate: flags,
        }
    }

    /// Aligned columns in the `Class / Prec. / Rec. / F1 / Accr.` layout.
    pub fn to_table(&self, title: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{title}");
        let _ = writeln!(s, "{:<8}{:>8}{:>8}{:>8}{:>8}", "Class", "Prec.", "Rec.", "F1", "Accr.");
        let _ = writeln!(
            s,
            "{:<8}{:>8.3}{:>8.3}{:>8.3}{:>8.3}",
            "Hate", self.hate.precision, self.hate.recall, self.hate.f1, self.accuracy
        );
        let _ = writeln!(
            s,
            "{:<8}{:>8.3}{:>8.3}{:>8.3}",
            "Normal", self.normal.precision, self.normal.recall, self.normal.f1
        );
        let _ = writeln!(s, "macro-F1 {:.3}  n={}", self.macro_f1, self.confusion.total());
        if !self.degenerate.is_empty() {
            let _ = writeln!(s, "degenerate (0/0 -> 0): {}", self.degenerate.join(", "));
        }
        s
    }
}

pub fn confusion(predictions: &[Label], gold: &[Label]) -> Result<Confusion, EvaluationError> {
    if predictions.len() != gold.len() {
        return Err(EvaluationError::LengthMismatch(predictions.len(), gold.len()));
    }
    let mut c = Confusion::default();
    for (&p, &g) in predictions.iter().zip(gold) {
        match (p, g) {
            (Label::Hate, Label::Hate) => c.tp += 1,
            (Label::Hate, Label::Normal) => c.fp += 1,
            (Label::Normal, Label::Hate) => c.fn_ += 1,
            (Label::Normal, Label::Normal) => c.tn += 1,
        }
    }
    Ok(c)
}

pub fn evaluate(predictions: &[Label], gold: &[Label]) -> Result<EvaluationReport, EvaluationError> {
    let c = confusion(predictions, gold)?;
    if c.total() == 0 {
        return Err(EvaluationError::Empty);
    }
    Ok(EvaluationReport::from_confusion(c))
}

/// Like [`evaluate`] on textual label symbols (`hate`/`normal`, `H`/`N`).
pub fn evaluate_symbols<S: AsRef<str>>(
    predictions: &[S],
    gold: &[S],
) -> Result<EvaluationReport, EvaluationError> {
    let parse = |xs: &[S]| {
        xs.iter()
            .map(|s| {
                s.as_ref()
                    .parse::<Label>()
                    .map_err(|_| EvaluationError::UnknownLabel(s.as_ref().to_string()))
            })
            .collect::<Result<Vec<_>, _>>()
    };
    evaluate(&parse(predictions)?, &parse(gold)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisagreementSample {
    pub id: String,
    pub text: String,
    pub a: Label,
    pub b: Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisagreementReport {
    pub total: usize,
    pub a_hate: usize,
    pub b_hate: usize,
    pub only_a: BTreeSet<String>,
    pub only_b: BTreeSet<String>,
    pub both: BTreeSet<String>,
    pub neither: usize,
    pub samples: Vec<DisagreementSample>,
}

/// Partitions the corpus by which labeling calls each post hate.
pub fn compare_labelings(
    a: &BTreeMap<String, Label>,
    b: &BTreeMap<String, Label>,
    corpus: &Corpus,
    sample_cap: usize,
) -> Result<DisagreementReport, EvaluationError> {
    let missing = |m: &BTreeMap<String, Label>| -> Vec<String> {
        let mut v: Vec<String> = corpus.ids().filter(|id| !m.contains_key(*id)).map(str::to_string).collect();
        v.sort();
        v
    };
    for (which, m) in [("a", a), ("b", b)] {
        let ids = missing(m);
        if !ids.is_empty() {
            return Err(EvaluationError::MissingIds { which, ids });
        }
    }
    let mut report = DisagreementReport {
        total: corpus.len(),
        a_hate: 0,
        b_hate: 0,
        only_a: BTreeSet::new(),
        only_b: BTreeSet::new(),
        both: BTreeSet::new(),
        neither: 0,
        samples: Vec::new(),
    };
    let mut disagreeing = BTreeMap::new();
    for post in corpus.posts() {
        let (la, lb) = (a[&post.id], b[&post.id]);
        report.a_hate += la.is_hate() as usize;
        report.b_hate += lb.is_hate() as usize;
        match (la.is_hate(), lb.is_hate()) {
            (true, true) => {
                report.both.insert(post.id.clone());
            }
            (true, false) => {
                report.only_a.insert(post.id.clone());
            }
            (false, true) => {
                report.only_b.insert(post.id.clone());
            }
            (false, false) => report.neither += 1,
        }
        if la != lb {
            disagreeing.insert(post.id.as_str(), (post, la, lb));
        }
    }
    report.samples = disagreeing
        .into_values()
        .take(sample_cap)
        .map(|(p, a, b)| DisagreementSample {
            id: p.id.clone(),
            text: p.text.clone(),
            a,
            b,
        })
        .collect();
    Ok(report)
}
