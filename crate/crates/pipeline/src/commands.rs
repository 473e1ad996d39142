//! One function per subcommand. Each reads and writes only the artifacts in
//! the work directory listed on [`Work`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use adaptox::classify::{grid_search, train, GridResult, Hyperparams, LinearModel, ModelKind};
use adaptox::corpus::{load_corpus, split_indices};
use adaptox::embedding::load_embeddings;
use adaptox::evaluation::{compare_labelings, evaluate, EvaluationReport};
use adaptox::features::{build_matrix, DenseSource, ExternalVectors, FeatureMatrix};
use adaptox::graph::{build_graph, flag_communities, louvain};
use adaptox::lexicon::{
    expand, read_term_file, sanitize, write_atomically, Decision, DecisionLog, ExpansionParams, RawList,
    SanitizeReport, SanitizeRules, Verdict,
};
use adaptox::normalize::tokenize;
use adaptox::{Corpus, EmbeddingTable, Label, Lexicon, LexiconEntry, LexiconView, Pooling, Status};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{DenseKind, PipelineConfig};
use crate::error::{input, Failure};

pub const LEXICON: &str = "lexicon.json";
pub const SANITIZE_REPORT: &str = "sanitize_report.json";
pub const CANDIDATES: &str = "candidates.jsonl";
pub const EXPANSION_REPORT: &str = "expansion_report.json";
pub const DECISIONS: &str = "decisions.jsonl";
pub const GRAPH_EDGES: &str = "graph_edges.tsv";
pub const PARTITION: &str = "partition.json";
pub const GRAPH_REPORT: &str = "graph_report.json";
pub const FEATURES: &str = "features.json";
pub const FEATURES_CSV: &str = "features.csv";
pub const FEATURES_META: &str = "features_meta.json";
pub const MODEL: &str = "model.json";
pub const CV_REPORT: &str = "cv_report.json";
pub const EVALUATION: &str = "evaluation.json";
pub const SCORES: &str = "scores.jsonl";
pub const COMPARISON: &str = "comparison.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_MD: &str = "report.md";

/// The work directory holding every pipeline artifact.
#[derive(Debug, Clone)]
pub struct Work {
    dir: PathBuf,
}

impl Work {
    pub fn open(dir: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(dir)
            .map_err(|e| Failure::config(format!("cannot create workdir {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn log(&self) -> DecisionLog {
        DecisionLog::new(self.path(DECISIONS))
    }

    fn existing(&self, name: &str, producer: &str) -> Result<PathBuf, Failure> {
        let p = self.path(name);
        if p.exists() {
            Ok(p)
        } else {
            Err(Failure::missing_artifact(&p, producer))
        }
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::internal(e.to_string()))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    write_atomically(path, bytes).map_err(|e| Failure::internal(format!("write {}: {e}", path.display())))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(input(&path.display().to_string()))?;
    serde_json::from_str(&text).map_err(input(&path.display().to_string()))
}

fn jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("item serializes"));
        out.push('\n');
    }
    out
}

/// The saved lexicon with the decision log replayed on top. Replaying is
/// idempotent, and it recovers decisions logged before a crash prevented
/// the lexicon file from being rewritten.
pub fn load_lexicon(work: &Work) -> Result<Lexicon, Failure> {
    let path = work.existing(LEXICON, "sanitize")?;
    let mut lex = Lexicon::load(&path).map_err(input("lexicon"))?;
    let decisions = work.log().read_all().map_err(input("decision log"))?;
    if !decisions.is_empty() {
        lex.apply_decisions(&decisions).map_err(input("replaying decision log"))?;
    }
    Ok(lex)
}

pub fn load_table(cfg: &PipelineConfig) -> Result<EmbeddingTable, Failure> {
    let path = cfg.require(&cfg.paths.embeddings, "embeddings")?;
    let (table, _) = load_embeddings(path, None).map_err(input("embeddings"))?;
    Ok(table)
}

pub fn load_configured_corpus(cfg: &PipelineConfig) -> Result<Corpus, Failure> {
    let path = cfg.require(&cfg.paths.corpus, "corpus")?;
    load_corpus_at(cfg, path)
}

fn load_corpus_at(cfg: &PipelineConfig, path: &Path) -> Result<Corpus, Failure> {
    let (corpus, _) = load_corpus(path, &cfg.corpus.load_options()).map_err(input("corpus"))?;
    Ok(corpus)
}

pub fn sanitize_cmd(cfg: &PipelineConfig, work: &Work) -> Result<Value, Failure> {
    if cfg.paths.seed_lists.is_empty() {
        return Err(Failure::config("paths.seed_lists is empty"));
    }
    let mut raw = Vec::new();
    for p in &cfg.paths.seed_lists {
        let terms = read_term_file(p).map_err(input("seed list"))?;
        let source = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        raw.push(RawList::new(source, terms));
    }
    let set = |p: &Option<PathBuf>| -> Result<Option<std::collections::HashSet<String>>, Failure> {
        p.as_deref()
            .map(|p| read_term_file(p).map(|v| v.into_iter().collect()).map_err(input("term list")))
            .transpose()
    };
    let rules = SanitizeRules {
        stopwords: set(&cfg.paths.stopwords)?.unwrap_or_default(),
        contextual: set(&cfg.paths.blocklist)?.unwrap_or_default(),
        wordlist: set(&cfg.paths.wordlist)?,
    };
    let (lex, report) = sanitize(&raw, &rules).map_err(input("sanitize"))?;
    lex.save(&work.path(LEXICON)).map_err(|e| Failure::internal(e.to_string()))?;
    write_json(&work.path(SANITIZE_REPORT), &report)?;
    // A fresh lexicon starts a fresh review history.
    write_bytes(&work.path(DECISIONS), b"")?;
    Ok(json!({ "command": "sanitize", "report": report, "counts": lex.counts() }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundSummary {
    pub generation: u32,
    pub threshold: f64,
    pub sources_used: usize,
    pub missing_sources: Vec<String>,
    pub skipped_phrases: usize,
    pub candidates: usize,
    pub auto_accepted: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ExpandArgs {
    pub auto_accept: bool,
}

/// One expansion round, or `expansion.generations` rounds with every
/// candidate accepted automatically. Stops early when a round finds nothing.
pub fn expand_cmd(cfg: &PipelineConfig, work: &Work, args: &ExpandArgs) -> Result<Value, Failure> {
    let mut lex = load_lexicon(work)?;
    let table = load_table(cfg)?;
    let params = ExpansionParams {
        threshold: cfg.expansion.threshold,
        max_candidates_per_seed: cfg.expansion.max_candidates_per_seed,
        ..ExpansionParams::default()
    };
    let rounds = if args.auto_accept { cfg.expansion.generations.max(1) } else { 1 };
    let log = work.log();
    let lex_path = work.path(LEXICON);
    let save = |lex: &Lexicon| lex.save(&lex_path).map_err(|e| Failure::internal(e.to_string()));
    let mut found: Vec<LexiconEntry> = Vec::new();
    let mut summaries = Vec::new();
    for _ in 0..rounds {
        let report = expand(&lex, &table, &params).map_err(input("expand"))?;
        let mut summary = RoundSummary {
            generation: report.generation,
            threshold: report.threshold,
            sources_used: report.sources_used,
            missing_sources: report.missing_sources.clone(),
            skipped_phrases: report.skipped_phrases,
            candidates: report.candidates.len(),
            auto_accepted: 0,
        };
        if report.candidates.is_empty() {
            summaries.push(summary);
            break;
        }
        lex.add_candidates(&report).map_err(|e| Failure::internal(e.to_string()))?;
        save(&lex)?;
        if args.auto_accept {
            let decisions: Vec<Decision> = report
                .candidates
                .iter()
                .map(|c| Decision {
                    term: c.term.clone(),
                    decision: Verdict::Accept,
                    reviewer: "auto".into(),
                    ts: format!("auto:gen{}", report.generation),
                })
                .collect();
            let mut next = lex.clone();
            next.apply_decisions(&decisions).map_err(|e| Failure::internal(e.to_string()))?;
            for d in &decisions {
                log.append(d).map_err(|e| Failure::internal(e.to_string()))?;
            }
            lex = next;
            save(&lex)?;
            summary.auto_accepted = decisions.len();
        }
        found.extend(report.candidates);
        summaries.push(summary);
    }
    write_bytes(&work.path(CANDIDATES), jsonl(&found).as_bytes())?;
    let out = json!({ "rounds": summaries, "counts": lex.counts() });
    write_json(&work.path(EXPANSION_REPORT), &out)?;
    Ok(json!({ "command": "expand", "candidates": found.len(), "report": out }))
}

/// Community detection over frequent corpus tokens plus the active lexicon.
/// Its candidates are advisory: they are reported, never added.
pub fn graph_cmd(cfg: &PipelineConfig, work: &Work) -> Result<Value, Failure> {
    let lex = load_lexicon(work)?;
    let table = load_table(cfg)?;
    let corpus = match &cfg.paths.corpus {
        Some(p) => Some(load_corpus_at(cfg, p)?),
        None => None,
    };
    let mut counted: Vec<(usize, usize)> = Vec::new();
    if let Some(corpus) = &corpus {
        let mut owned: HashMap<String, usize> = HashMap::new();
        for post in corpus.posts() {
            for tok in tokenize(&post.text) {
                if table.contains(&tok.normalized) {
                    *owned.entry(tok.normalized).or_default() += 1;
                }
            }
        }
        for (i, t) in table.tokens().iter().enumerate() {
            if let Some(&c) = owned.get(t) {
                counted.push((c, i));
            }
        }
    } else {
        counted.extend(table.tokens().iter().enumerate().map(|(i, _)| (0, i)));
    }
    // Ties keep embedding file order.
    counted.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut vocab: BTreeSet<&str> = counted
        .iter()
        .take(cfg.graph.vocab_size)
        .map(|&(_, i)| table.tokens()[i].as_str())
        .collect();
    for e in lex.entries() {
        if e.is_active() && !e.is_phrase() && table.contains(&e.term) {
            vocab.insert(&e.term);
        }
    }
    let vocab: Vec<&str> = vocab.into_iter().collect();
    let graph = build_graph(&table, &vocab, cfg.graph.threshold).map_err(input("graph"))?;
    let partition = louvain(&graph, cfg.graph.seed, cfg.graph.resolution);
    let report = flag_communities(&graph, &partition, &lex);
    let mut edges = Vec::new();
    graph.write_edge_list(&mut edges).map_err(|e| Failure::internal(e.to_string()))?;
    write_bytes(&work.path(GRAPH_EDGES), &edges)?;
    write_bytes(&work.path(PARTITION), partition.to_json().as_bytes())?;
    let out = json!({
        "nodes": graph.nodes().len(),
        "edges": graph.edge_count(),
        "communities": partition.community_count(),
        "modularity": partition.modularity,
        "flagged": report.flagged,
        "candidates": report.candidates,
    });
    write_json(&work.path(GRAPH_REPORT), &out)?;
    Ok(json!({
        "command": "graph",
        "nodes": graph.nodes().len(),
        "edges": graph.edge_count(),
        "communities": partition.community_count(),
        "modularity": partition.modularity,
        "flagged": report.flagged.len(),
        "candidates": report.candidates.len(),
    }))
}

/// Records which lexicon view and dense source produced `features.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturesMeta {
    pub view: LexiconView,
    pub dense: DenseKind,
    pub fingerprint: String,
    pub rows: usize,
    pub width: usize,
}

enum Dense {
    Table(EmbeddingTable),
    External(ExternalVectors),
}

impl Dense {
    fn load(cfg: &PipelineConfig) -> Result<Self, Failure> {
        Ok(match cfg.features.dense {
            DenseKind::Table => Dense::Table(load_table(cfg)?),
            DenseKind::External => {
                let p = cfg.require(&cfg.paths.external_vectors, "external_vectors")?;
                Dense::External(ExternalVectors::load(p).map_err(input("external vectors"))?)
            }
        })
    }

    fn source(&self) -> DenseSource<'_> {
        match self {
            Dense::Table(t) => DenseSource::Table(t, Pooling::MeanOfKnownTokens),
            Dense::External(e) => DenseSource::External(e),
        }
    }
}

pub fn featurize_cmd(cfg: &PipelineConfig, work: &Work, csv: bool) -> Result<Value, Failure> {
    let lex = load_lexicon(work)?;
    let corpus = load_configured_corpus(cfg)?;
    let dense = Dense::load(cfg)?;
    let frozen = lex.freeze(cfg.features.view);
    let matrix = build_matrix(&corpus, &frozen, &cfg.normalizer, dense.source()).map_err(input("featurize"))?;
    matrix.save(&work.path(FEATURES)).map_err(|e| Failure::internal(e.to_string()))?;
    if csv {
        let mut buf = Vec::new();
        matrix.write_csv(&mut buf).map_err(|e| Failure::internal(e.to_string()))?;
        write_bytes(&work.path(FEATURES_CSV), &buf)?;
    }
    let meta = FeaturesMeta {
        view: cfg.features.view,
        dense: cfg.features.dense,
        fingerprint: matrix.fingerprint.clone(),
        rows: matrix.len(),
        width: matrix.width(),
    };
    write_json(&work.path(FEATURES_META), &meta)?;
    Ok(json!({ "command": "featurize", "features": meta, "terms": matrix.terms.len() }))
}

/// The feature matrix, refused when the lexicon changed after featurize.
fn current_features(work: &Work) -> Result<(FeatureMatrix, FeaturesMeta), Failure> {
    let lex = load_lexicon(work)?;
    let meta: FeaturesMeta = read_json(&work.existing(FEATURES_META, "featurize")?)?;
    let matrix = FeatureMatrix::load(&work.existing(FEATURES, "featurize")?).map_err(input("features"))?;
    let now = lex.freeze(meta.view);
    if matrix.fingerprint != meta.fingerprint || now.fingerprint() != matrix.fingerprint {
        return Err(Failure::stage(format!(
            "lexicon fingerprint mismatch: features built for {}, current {} lexicon is {}; re-run `featurize`",
            matrix.fingerprint,
            view_name(meta.view),
            now.fingerprint()
        )));
    }
    Ok((matrix, meta))
}

fn view_name(v: LexiconView) -> &'static str {
    match v {
        LexiconView::Seed => "seed",
        LexiconView::Updated => "updated",
    }
}

fn split(cfg: &PipelineConfig, matrix: &FeatureMatrix) -> Result<(Vec<usize>, Vec<usize>), Failure> {
    let labels = matrix
        .labels
        .as_ref()
        .ok_or_else(|| Failure::input("corpus has no labels; cannot train or evaluate"))?;
    let labels: Vec<Option<Label>> = labels.iter().copied().map(Some).collect();
    split_indices(&labels, cfg.evaluation.train_ratio, cfg.evaluation.split_seed, true).map_err(input("split"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvArtifact {
    pub fingerprint: String,
    pub kind: ModelKind,
    pub k: usize,
    pub seed: u64,
    pub grid: Vec<Hyperparams>,
    pub train_rows: usize,
    pub result: GridResult,
}

pub fn cross_validate_cmd(cfg: &PipelineConfig, work: &Work) -> Result<Value, Failure> {
    let (matrix, _) = current_features(work)?;
    let (train_idx, _) = split(cfg, &matrix)?;
    let train_m = matrix.select(&train_idx);
    let grid = cfg.training.grid();
    let result = grid_search(&train_m, cfg.training.kind, &grid, cfg.training.k, cfg.training.seed)
        .map_err(input("cross-validate"))?;
    let best = match &result.points[result.best_index].outcome {
        adaptox::classify::PointOutcome::Ok(r) => json!({
            "mean_accuracy": r.mean_accuracy,
            "mean_macro_f1": r.mean_macro_f1,
        }),
        adaptox::classify::PointOutcome::Failed(e) => json!({ "failed": e }),
    };
    let art = CvArtifact {
        fingerprint: matrix.fingerprint.clone(),
        kind: cfg.training.kind,
        k: cfg.training.k,
        seed: cfg.training.seed,
        grid,
        train_rows: train_m.len(),
        result,
    };
    write_json(&work.path(CV_REPORT), &art)?;
    Ok(json!({
        "command": "cross-validate",
        "kind": art.kind,
        "best": art.result.best,
        "best_index": art.result.best_index,
        "scores": best,
    }))
}

/// Trains on the train split with the cross-validated best point when a
/// matching `cv_report.json` exists, otherwise with the first grid point.
pub fn train_cmd(cfg: &PipelineConfig, work: &Work) -> Result<Value, Failure> {
    let (matrix, _) = current_features(work)?;
    let (train_idx, _) = split(cfg, &matrix)?;
    let train_m = matrix.select(&train_idx);
    let grid = cfg.training.grid();
    let cv_path = work.path(CV_REPORT);
    let mut chosen_by = "grid[0]";
    let mut hp = *grid.first().ok_or_else(|| Failure::config("training.grid is empty"))?;
    if cv_path.exists() {
        let cv: CvArtifact = read_json(&cv_path)?;
        if cv.fingerprint == matrix.fingerprint
            && cv.kind == cfg.training.kind
            && cv.k == cfg.training.k
            && cv.seed == cfg.training.seed
            && cv.grid == grid
        {
            hp = cv.result.best;
            chosen_by = "cross-validation";
        }
    }
    let model = train(&train_m, cfg.training.kind, &hp).map_err(input("train"))?;
    model.save(&work.path(MODEL)).map_err(|e| Failure::internal(e.to_string()))?;
    Ok(json!({
        "command": "train",
        "kind": model.kind,
        "hyperparams": hp,
        "chosen_by": chosen_by,
        "train_rows": train_m.len(),
        "final_loss": model.training_report.final_loss,
    }))
}

fn load_model(work: &Work) -> Result<LinearModel, Failure> {
    LinearModel::load(&work.existing(MODEL, "train")?).map_err(input("model"))
}

fn check_model(model: &LinearModel, matrix: &FeatureMatrix) -> Result<(), Failure> {
    model
        .check_fingerprint(&matrix.fingerprint)
        .map_err(|e| Failure::stage(format!("{e}; re-run `train`")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationArtifact {
    pub fingerprint: String,
    pub kind: ModelKind,
    pub hyperparams: Hyperparams,
    pub test_rows: usize,
    pub report: EvaluationReport,
}

pub fn evaluate_cmd(cfg: &PipelineConfig, work: &Work) -> Result<Value, Failure> {
    let (matrix, _) = current_features(work)?;
    let model = load_model(work)?;
    check_model(&model, &matrix)?;
    let (_, test_idx) = split(cfg, &matrix)?;
    let test = matrix.select(&test_idx);
    let scored = model.score_matrix(&test).map_err(input("evaluate"))?;
    let preds: Vec<Label> = scored.iter().map(|&(l, _)| l).collect();
    let gold = test.labels.as_deref().expect("split checked labels");
    let report = evaluate(&preds, gold).map_err(input("evaluate"))?;
    let art = EvaluationArtifact {
        fingerprint: matrix.fingerprint.clone(),
        kind: model.kind,
        hyperparams: model.hyperparams,
        test_rows: test.len(),
        report,
    };
    write_json(&work.path(EVALUATION), &art)?;
    Ok(json!({
        "command": "evaluate",
        "test_rows": art.test_rows,
        "accuracy": art.report.accuracy,
        "macro_f1": art.report.macro_f1,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPost {
    pub id: String,
    pub label: Label,
    pub score: f64,
    pub matched_terms: Vec<String>,
}

/// Scores the featurized corpus, or another corpus featurized on the fly
/// with the same lexicon view and dense source.
pub fn score_cmd(cfg: &PipelineConfig, work: &Work, corpus: Option<&Path>) -> Result<Vec<ScoredPost>, Failure> {
    let model = load_model(work)?;
    let matrix = match corpus {
        None => current_features(work)?.0,
        Some(path) => {
            let lex = load_lexicon(work)?;
            let view = match work.path(FEATURES_META) {
                p if p.exists() => read_json::<FeaturesMeta>(&p)?.view,
                _ => cfg.features.view,
            };
            let corpus = load_corpus_at(cfg, path)?;
            let dense = Dense::load(cfg)?;
            build_matrix(&corpus, &lex.freeze(view), &cfg.normalizer, dense.source()).map_err(input("score"))?
        }
    };
    check_model(&model, &matrix)?;
    let scored = model.score_matrix(&matrix).map_err(input("score"))?;
    let out: Vec<ScoredPost> = matrix
        .ids
        .iter()
        .zip(&matrix.rows)
        .zip(scored)
        .map(|((id, row), (label, score))| {
            let mut seen = BTreeSet::new();
            let matched_terms = row
                .meta
                .matches
                .iter()
                .filter(|m| seen.insert(m.lexicon_term.clone()))
                .map(|m| m.lexicon_term.clone())
                .collect();
            ScoredPost { id: id.clone(), label, score, matched_terms }
        })
        .collect();
    write_bytes(&work.path(SCORES), jsonl(&out).as_bytes())?;
    Ok(out)
}

#[derive(Deserialize)]
struct LabelLine {
    id: String,
    label: Label,
}

/// Reads `{id, label}` JSON lines; other fields are ignored.
pub fn read_labeling(path: &Path) -> Result<BTreeMap<String, Label>, Failure> {
    let ctx = path.display().to_string();
    let f = File::open(path).map_err(input(&ctx))?;
    let mut out = BTreeMap::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(input(&ctx))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LabelLine = serde_json::from_str(&line)
            .map_err(|e| Failure::input(format!("{ctx}:{}: {e}", i + 1)))?;
        if out.insert(rec.id.clone(), rec.label).is_some() {
            return Err(Failure::input(format!("{ctx}:{}: duplicate id {:?}", i + 1, rec.id)));
        }
    }
    Ok(out)
}

pub fn compare_cmd(cfg: &PipelineConfig, work: &Work, a: &Path, b: &Path) -> Result<Value, Failure> {
    let corpus = load_configured_corpus(cfg)?;
    let (la, lb) = (read_labeling(a)?, read_labeling(b)?);
    let report = compare_labelings(&la, &lb, &corpus, cfg.evaluation.sample_cap).map_err(input("compare"))?;
    write_json(&work.path(COMPARISON), &report)?;
    Ok(serde_json::to_value(&report).expect("report serializes"))
}

/// Summarizes whatever artifacts exist into `report.json` and `report.md`.
pub fn report_cmd(work: &Work) -> Result<Value, Failure> {
    let lex = load_lexicon(work)?;
    let opt = |name: &str| -> Result<Option<Value>, Failure> {
        let p = work.path(name);
        if p.exists() { read_json(&p).map(Some) } else { Ok(None) }
    };
    let sanitize_report: Option<SanitizeReport> = match work.path(SANITIZE_REPORT) {
        p if p.exists() => Some(read_json(&p)?),
        _ => None,
    };
    let cv: Option<CvArtifact> = match work.path(CV_REPORT) {
        p if p.exists() => Some(read_json(&p)?),
        _ => None,
    };
    let evaluation: Option<EvaluationArtifact> = match work.path(EVALUATION) {
        p if p.exists() => Some(read_json(&p)?),
        _ => None,
    };
    let counts = lex.counts();
    let generations = lex.generation_stats();
    let seed_fp = lex.freeze(LexiconView::Seed).fingerprint().to_string();
    let updated_fp = lex.freeze(LexiconView::Updated).fingerprint().to_string();
    let cv_summary = cv.as_ref().map(|c| {
        let best = match &c.result.points[c.result.best_index].outcome {
            adaptox::classify::PointOutcome::Ok(r) => Some((r.mean_accuracy, r.mean_macro_f1)),
            adaptox::classify::PointOutcome::Failed(_) => None,
        };
        json!({
            "kind": c.kind,
            "k": c.k,
            "best": c.result.best,
            "mean_accuracy": best.map(|b| b.0),
            "mean_macro_f1": best.map(|b| b.1),
        })
    });
    let out = json!({
        "lexicon": {
            "counts": counts,
            "seed_fingerprint": seed_fp,
            "updated_fingerprint": updated_fp,
            "generations": generations,
        },
        "sanitize": sanitize_report,
        "expansion": opt(EXPANSION_REPORT)?,
        "cross_validation": cv_summary,
        "evaluation": evaluation.as_ref().map(|e| json!({
            "kind": e.kind,
            "test_rows": e.test_rows,
            "accuracy": e.report.accuracy,
            "macro_f1": e.report.macro_f1,
        })),
    });
    write_json(&work.path(REPORT_JSON), &out)?;

    let mut md = String::new();
    let _ = writeln!(md, "# Pipeline report\n");
    let _ = writeln!(md, "## Lexicon\n");
    let _ = writeln!(md, "| status | terms |\n|---|---|");
    for (name, n) in [
        ("seed", counts.seed),
        ("candidate", counts.candidate),
        ("accepted", counts.accepted),
        ("rejected", counts.rejected),
        ("updated (seed + accepted)", counts.updated),
    ] {
        let _ = writeln!(md, "| {name} | {n} |");
    }
    let _ = writeln!(md, "\nSeed fingerprint `{seed_fp}`\n\nUpdated fingerprint `{updated_fp}`\n");
    if !generations.is_empty() {
        let _ = writeln!(md, "## Generations\n");
        let _ = writeln!(md, "| generation | threshold | candidate | accepted | rejected |\n|---|---|---|---|---|");
        for g in &generations {
            let t = g.threshold.map(|t| format!("{t}")).unwrap_or_else(|| "-".into());
            let _ = writeln!(md, "| {} | {t} | {} | {} | {} |", g.generation, g.candidate, g.accepted, g.rejected);
        }
        md.push('\n');
    }
    if let Some(r) = &sanitize_report {
        let _ = writeln!(md, "## Sanitize\n");
        let _ = writeln!(
            md,
            "{} raw terms, {} kept ({} non-English, {} duplicates, {} stopwords, {} contextual)\n",
            r.input_terms, r.kept, r.non_english, r.duplicates, r.stopwords, r.contextual
        );
    }
    if let Some(c) = &cv {
        let _ = writeln!(md, "## Cross-validation\n");
        let _ = writeln!(md, "{}-fold, kind `{}`, {} training rows\n", c.k, kind_name(c.kind), c.train_rows);
        let _ = writeln!(md, "| l2_lambda | learning_rate | epochs | mean accuracy | mean macro-F1 |\n|---|---|---|---|---|");
        for (i, p) in c.result.points.iter().enumerate() {
            let h = &p.hyperparams;
            let (acc, f1) = match &p.outcome {
                adaptox::classify::PointOutcome::Ok(r) => (format!("{:.4}", r.mean_accuracy), format!("{:.4}", r.mean_macro_f1)),
                adaptox::classify::PointOutcome::Failed(e) => ("failed".into(), e.clone()),
            };
            let mark = if i == c.result.best_index { " (best)" } else { "" };
            let _ = writeln!(md, "| {} | {} | {} | {acc} | {f1}{mark} |", h.l2_lambda, h.learning_rate, h.epochs);
        }
        md.push('\n');
    }
    if let Some(e) = &evaluation {
        let _ = writeln!(md, "## Held-out evaluation\n");
        let _ = writeln!(md, "```");
        md.push_str(&e.report.to_table(&format!("{} on {} test posts", kind_name(e.kind), e.test_rows)));
        let _ = writeln!(md, "```");
    }
    write_bytes(&work.path(REPORT_MD), md.as_bytes())?;
    Ok(json!({ "command": "report", "counts": counts }))
}

fn kind_name(k: ModelKind) -> &'static str {
    match k {
        ModelKind::Logistic => "logistic",
        ModelKind::LinearSvm => "linear-svm",
    }
}

/// Candidates in review order: strongest evidence first, then by term.
pub fn review_queue(lex: &Lexicon, generation: Option<u32>) -> Vec<LexiconEntry> {
    let mut items: Vec<LexiconEntry> = lex
        .with_status(Status::Candidate)
        .filter(|e| generation.is_none_or(|g| e.generation == g))
        .cloned()
        .collect();
    let sim = |e: &LexiconEntry| e.evidence.as_ref().map_or(f64::NEG_INFINITY, |ev| ev.similarity);
    items.sort_by(|a, b| sim(b).total_cmp(&sim(a)).then_with(|| a.term.cmp(&b.term)));
    items
}
