use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use adaptox::classify::ModelKind;
use adaptox::LexiconView;
use clap::{Parser, Subcommand};
use serde_json::Value;

mod commands;
mod config;
mod error;
mod service;

use commands::{ExpandArgs, Work};
use config::PipelineConfig;
use error::Failure;

/// Adaptive lexicon pipeline: sanitize, expand, review, featurize, train,
/// evaluate, score and compare.
#[derive(Parser)]
#[command(name = "adaptox", version)]
struct Cli {
    /// Pipeline config (JSON); relative paths inside resolve against it.
    #[arg(long, global = true, default_value = "adaptox.json")]
    config: PathBuf,
    /// Overrides `workdir` from the config.
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the seed lexicon from the raw lists (resets the decision log).
    Sanitize,
    /// Propose candidates from embedding neighbours.
    Expand {
        /// Accept every candidate, for `generations` rounds.
        #[arg(long)]
        auto_accept: bool,
        #[arg(long)]
        generations: Option<u32>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        max_per_seed: Option<usize>,
    },
    /// Louvain communities over the word graph (advisory candidates).
    Graph {
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        resolution: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Serve the review HTTP API.
    ReviewServe {
        #[arg(long)]
        bind: Option<String>,
    },
    /// Build the feature matrix for the configured corpus.
    Featurize {
        #[arg(long, value_parser = parse_view)]
        view: Option<LexiconView>,
        /// Also write features.csv.
        #[arg(long)]
        csv: bool,
    },
    /// Train on the train split.
    Train {
        #[arg(long)]
        kind: Option<ModelKind>,
    },
    /// Grid search with stratified k-fold CV on the train split.
    CrossValidate {
        #[arg(long)]
        kind: Option<ModelKind>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Score the held-out split.
    Evaluate,
    /// Write per-post scores as JSON lines, also echoed to stdout.
    Score {
        /// Score this corpus instead of the featurized one.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Compare two `{id, label}` JSONL labelings.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Summarize the artifacts into report.json and report.md.
    Report,
}

fn parse_view(s: &str) -> Result<LexiconView, String> {
    match s {
        "seed" => Ok(LexiconView::Seed),
        "updated" => Ok(LexiconView::Updated),
        other => Err(format!("unknown view {other:?} (seed, updated)")),
    }
}

fn apply_overrides(cfg: &mut PipelineConfig, cli: &Cli) {
    if let Some(w) = &cli.workdir {
        cfg.workdir = w.clone();
    }
    match &cli.command {
        Command::Expand { generations, threshold, max_per_seed, .. } => {
            if let Some(g) = generations {
                cfg.expansion.generations = *g;
            }
            if let Some(t) = threshold {
                cfg.expansion.threshold = *t;
            }
            if let Some(m) = max_per_seed {
                cfg.expansion.max_candidates_per_seed = *m;
            }
        }
        Command::Graph { threshold, resolution, seed } => {
            if let Some(t) = threshold {
                cfg.graph.threshold = *t;
            }
            if let Some(r) = resolution {
                cfg.graph.resolution = *r;
            }
            if let Some(s) = seed {
                cfg.graph.seed = *s;
            }
        }
        Command::ReviewServe { bind: Some(b) } => cfg.service.bind = b.clone(),
        Command::Featurize { view: Some(v), .. } => cfg.features.view = *v,
        Command::Train { kind: Some(k) } => cfg.training.kind = *k,
        Command::CrossValidate { kind, k } => {
            if let Some(kind) = kind {
                cfg.training.kind = *kind;
            }
            if let Some(k) = k {
                cfg.training.k = *k;
            }
        }
        _ => {}
    }
}

fn run(cli: Cli) -> Result<Option<Value>, Failure> {
    let mut cfg = PipelineConfig::load(&cli.config)?;
    apply_overrides(&mut cfg, &cli);
    cfg.validate()?;
    let work = Work::open(&cfg.workdir)?;
    let summary = match &cli.command {
        Command::Sanitize => commands::sanitize_cmd(&cfg, &work)?,
        Command::Expand { auto_accept, .. } => {
            commands::expand_cmd(&cfg, &work, &ExpandArgs { auto_accept: *auto_accept })?
        }
        Command::Graph { .. } => commands::graph_cmd(&cfg, &work)?,
        Command::ReviewServe { .. } => {
            let bind = cfg.service.bind.clone();
            let state = service::AppState::load(cfg, work)?;
            service::run(state, &bind)?;
            return Ok(None);
        }
        Command::Featurize { csv, .. } => commands::featurize_cmd(&cfg, &work, *csv)?,
        Command::Train { .. } => commands::train_cmd(&cfg, &work)?,
        Command::CrossValidate { .. } => commands::cross_validate_cmd(&cfg, &work)?,
        Command::Evaluate => commands::evaluate_cmd(&cfg, &work)?,
        Command::Score { corpus } => {
            let scored = commands::score_cmd(&cfg, &work, corpus.as_deref())?;
            let mut out = std::io::stdout().lock();
            for s in &scored {
                let _ = writeln!(out, "{}", serde_json::to_string(s).expect("score serializes"));
            }
            return Ok(None);
        }
        Command::Compare { a, b } => commands::compare_cmd(&cfg, &work, a, b)?,
        Command::Report => commands::report_cmd(&work)?,
    };
    Ok(Some(summary))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            if let Some(v) = summary {
                println!("{v}");
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.code)
        }
    }
}
