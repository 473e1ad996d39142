//! Review HTTP API over the work directory's lexicon and decision log.

use std::io::Write as _;
use std::sync::{Arc, Mutex};

use adaptox::lexicon::{expand, Decision, ExpansionParams, LexiconError, Verdict};
use adaptox::normalize::{tokenize, Matcher};
use adaptox::{Corpus, EmbeddingTable, Lexicon, LexiconView, Status};
use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::net::TcpListener;

use crate::commands::{load_configured_corpus, load_lexicon, load_table, review_queue, Work, LEXICON};
use crate::config::PipelineConfig;
use crate::error::Failure;

pub struct AppState {
    cfg: PipelineConfig,
    work: Work,
    table: Option<EmbeddingTable>,
    corpus: Option<Corpus>,
    /// Single writer: every lexicon mutation happens under this lock.
    lexicon: Mutex<Lexicon>,
}

impl AppState {
    /// Loads the lexicon, replays the decision log, and loads the optional
    /// embedding table and corpus used for evidence.
    pub fn load(cfg: PipelineConfig, work: Work) -> Result<Self, Failure> {
        let lexicon = load_lexicon(&work)?;
        let table = match cfg.paths.embeddings {
            Some(_) => Some(load_table(&cfg)?),
            None => None,
        };
        let corpus = match cfg.paths.corpus {
            Some(_) => Some(load_configured_corpus(&cfg)?),
            None => None,
        };
        lexicon
            .save(&work.path(LEXICON))
            .map_err(|e| Failure::internal(e.to_string()))?;
        Ok(Self { cfg, work, table, corpus, lexicon: Mutex::new(lexicon) })
    }

    fn snapshot(&self) -> Lexicon {
        self.lexicon.lock().expect("lexicon lock").clone()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/candidates", get(candidates))
        .route("/decisions", post(decisions))
        .route("/lexicon", get(lexicon))
        .route("/stats", get(stats))
        .route("/expand", post(expand_round))
        .with_state(state)
}

/// Serves until ctrl-c. The bound address is printed to stdout first so a
/// caller that asked for port 0 can find it.
pub fn run(state: AppState, bind: &str) -> Result<(), Failure> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::internal(e.to_string()))?;
    rt.block_on(async {
        let listener = TcpListener::bind(bind)
            .await
            .map_err(|e| Failure::config(format!("cannot bind {bind}: {e}")))?;
        let addr = listener.local_addr().map_err(|e| Failure::internal(e.to_string()))?;
        let mut out = std::io::stdout();
        let _ = writeln!(out, "{}", json!({ "listening": addr.to_string() }));
        let _ = out.flush();
        axum::serve(listener, router(Arc::new(state)))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| Failure::internal(e.to_string()))
    })
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn lexicon_error(e: LexiconError) -> ApiError {
    let status = match e {
        LexiconError::UnknownTerm(_) => StatusCode::NOT_FOUND,
        LexiconError::Conflict { .. } => StatusCode::CONFLICT,
        LexiconError::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::BAD_REQUEST,
    };
    ApiError(status, e.to_string())
}

fn internal(e: impl ToString) -> ApiError {
    ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CandidateQuery {
    generation: Option<u32>,
    #[serde(default = "first_page")]
    page: usize,
    page_size: Option<usize>,
}

fn first_page() -> usize {
    1
}

#[derive(Serialize)]
struct Example {
    id: String,
    text: String,
}

async fn candidates(
    State(st): State<Arc<AppState>>,
    query: Result<Query<CandidateQuery>, axum::extract::rejection::QueryRejection>,
) -> Result<Json<Value>, ApiError> {
    let Query(q) = query.map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.body_text()))?;
    let page_size = q.page_size.unwrap_or(st.cfg.service.page_size);
    if q.page == 0 || page_size == 0 {
        return Err(ApiError(StatusCode::BAD_REQUEST, "page and page_size start at 1".into()));
    }
    let lex = st.snapshot();
    let queue = review_queue(&lex, q.generation);
    let total = queue.len();
    let start = (q.page - 1).saturating_mul(page_size).min(total);
    let end = start.saturating_add(page_size).min(total);
    let mut items = Vec::new();
    for entry in &queue[start..end] {
        let neighbors = match &st.table {
            Some(t) if t.contains(&entry.term) => t
                .neighbors(&entry.term, st.cfg.service.neighbor_count, -1.0)
                .map_err(internal)?,
            _ => Vec::new(),
        };
        items.push(json!({
            "term": entry.term,
            "status": entry.status,
            "source": entry.source,
            "generation": entry.generation,
            "evidence": entry.evidence,
            "neighbors": neighbors,
            "examples": examples(&st, &entry.term),
        }));
    }
    Ok(Json(json!({
        "generation": q.generation,
        "page": q.page,
        "page_size": page_size,
        "total": total,
        "items": items,
    })))
}

/// Up to `example_cap` corpus posts in which the normalizer finds `term`.
fn examples(st: &AppState, term: &str) -> Vec<Example> {
    let Some(corpus) = &st.corpus else {
        return Vec::new();
    };
    let matcher = Matcher::from_terms(&[term], st.cfg.normalizer.clone());
    corpus
        .posts()
        .iter()
        .filter(|p| !matcher.match_tokens(&tokenize(&p.text), &p.text).is_empty())
        .take(st.cfg.service.example_cap)
        .map(|p| Example { id: p.id.clone(), text: p.text.clone() })
        .collect()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DecisionBody {
    term: String,
    decision: Verdict,
    reviewer: String,
    #[serde(default)]
    ts: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DecisionRequest {
    One(DecisionBody),
    Batch(Vec<DecisionBody>),
}

fn require_json(headers: &HeaderMap) -> Result<(), ApiError> {
    let ok = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.split(';').next())
        .is_some_and(|m| m.trim().eq_ignore_ascii_case("application/json"));
    if ok {
        Ok(())
    } else {
        Err(ApiError(StatusCode::UNSUPPORTED_MEDIA_TYPE, "expected Content-Type: application/json".into()))
    }
}

/// Validates the whole batch on a copy, appends every decision to the log
/// (fsynced), rewrites the lexicon file, and only then answers.
async fn decisions(
    State(st): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    require_json(&headers)?;
    let req: DecisionRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError(StatusCode::BAD_REQUEST, format!("malformed body: {e}")))?;
    let (bodies, single) = match req {
        DecisionRequest::One(b) => (vec![b], true),
        DecisionRequest::Batch(v) => (v, false),
    };
    if bodies.is_empty() {
        return Err(ApiError(StatusCode::BAD_REQUEST, "empty decision batch".into()));
    }
    let mut batch = Vec::with_capacity(bodies.len());
    for b in bodies {
        if b.reviewer.trim().is_empty() {
            return Err(ApiError(StatusCode::BAD_REQUEST, "reviewer must be non-empty".into()));
        }
        batch.push(Decision {
            term: b.term.trim().to_lowercase(),
            decision: b.decision,
            reviewer: b.reviewer,
            ts: b.ts.unwrap_or_default(),
        });
    }
    let mut guard = st.lexicon.lock().expect("lexicon lock");
    let mut next = guard.clone();
    // Seeds are never reviewable, whatever the verdict.
    for d in &batch {
        if next.get(&d.term).is_some_and(|e| e.status == Status::Seed) {
            return Err(ApiError(StatusCode::CONFLICT, format!("{:?} is a seed term", d.term)));
        }
    }
    next.apply_decisions(&batch).map_err(lexicon_error)?;
    let log = st.work.log();
    for d in &batch {
        log.append(d).map_err(internal)?;
    }
    next.save(&st.work.path(LEXICON)).map_err(internal)?;
    *guard = next;
    let entries: Vec<_> = batch.iter().map(|d| guard.get(&d.term).cloned()).collect();
    let counts = guard.counts();
    drop(guard);
    Ok(Json(if single {
        json!({ "entry": entries[0], "counts": counts })
    } else {
        json!({ "entries": entries, "counts": counts })
    }))
}

async fn lexicon(State(st): State<Arc<AppState>>) -> Json<Value> {
    let lex = st.snapshot();
    let seed = lex.freeze(LexiconView::Seed);
    let updated = lex.freeze(LexiconView::Updated);
    Json(json!({
        "counts": lex.counts(),
        "seed": { "terms": seed.terms(), "fingerprint": seed.fingerprint() },
        "updated": { "terms": updated.terms(), "fingerprint": updated.fingerprint() },
        "entries": lex.entries(),
    }))
}

async fn stats(State(st): State<Arc<AppState>>) -> Result<Json<Value>, ApiError> {
    let lex = st.snapshot();
    let logged = st.work.log().read_all().map_err(internal)?.len();
    let counts = lex.counts();
    let reviewed = counts.accepted + counts.rejected;
    let proposed = reviewed + counts.candidate;
    Ok(Json(json!({
        "counts": counts,
        "generations": lex.generation_stats(),
        "thresholds": lex.thresholds(),
        "decisions_logged": logged,
        "review_progress": if proposed == 0 { 1.0 } else { reviewed as f64 / proposed as f64 },
    })))
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ExpandBody {
    threshold: Option<f64>,
    max_candidates_per_seed: Option<usize>,
}

/// Runs one expansion round against the current lexicon.
async fn expand_round(
    State(st): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let req: ExpandBody = if body.is_empty() {
        ExpandBody::default()
    } else {
        require_json(&headers)?;
        serde_json::from_slice(&body).map_err(|e| ApiError(StatusCode::BAD_REQUEST, format!("malformed body: {e}")))?
    };
    let Some(table) = &st.table else {
        return Err(ApiError(StatusCode::CONFLICT, "no embedding table configured".into()));
    };
    let params = ExpansionParams {
        threshold: req.threshold.unwrap_or(st.cfg.expansion.threshold),
        max_candidates_per_seed: req.max_candidates_per_seed.unwrap_or(st.cfg.expansion.max_candidates_per_seed),
        ..ExpansionParams::default()
    };
    let mut guard = st.lexicon.lock().expect("lexicon lock");
    let report = expand(&guard, table, &params).map_err(lexicon_error)?;
    let mut next = guard.clone();
    if !report.candidates.is_empty() {
        next.add_candidates(&report).map_err(internal)?;
        next.save(&st.work.path(LEXICON)).map_err(internal)?;
    }
    *guard = next;
    Ok(Json(json!({
        "generation": report.generation,
        "threshold": report.threshold,
        "candidates": report.candidates.iter().map(|c| &c.term).collect::<Vec<_>>(),
        "counts": guard.counts(),
    })))
}
