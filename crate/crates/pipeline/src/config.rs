//! Pipeline configuration: one JSON file, paths relative to the file.

use std::path::{Path, PathBuf};

use adaptox::classify::{default_grid, Hyperparams, ModelKind};
use adaptox::corpus::{Format, LabelMapping, LoadOptions, Schema};
use adaptox::normalize::NormalizerConfig;
use adaptox::LexiconView;
use serde::{Deserialize, Serialize};

use crate::error::Failure;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub embeddings: Option<PathBuf>,
    /// Raw seed term lists, one term per line.
    #[serde(default)]
    pub seed_lists: Vec<PathBuf>,
    pub stopwords: Option<PathBuf>,
    /// Contextual words to drop (terms toxic only in some contexts).
    pub blocklist: Option<PathBuf>,
    pub wordlist: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub external_vectors: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub format: Format,
    #[serde(default)]
    pub schema: Schema,
    /// Defaults to the identity mapping over `hate`/`normal`.
    #[serde(default)]
    pub mapping: Option<LabelMapping>,
    #[serde(default)]
    pub anonymize: bool,
    #[serde(default = "default_source")]
    pub source: String,
}

fn default_source() -> String {
    "corpus".into()
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            format: Format::Jsonl,
            schema: Schema::default(),
            mapping: None,
            anonymize: false,
            source: default_source(),
        }
    }
}

impl CorpusConfig {
    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            format: self.format,
            schema: self.schema.clone(),
            mapping: self.mapping.clone().unwrap_or_else(LabelMapping::identity),
            anonymize: self.anonymize,
            source: self.source.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpansionConfig {
    pub threshold: f64,
    pub max_candidates_per_seed: usize,
    /// Rounds run by `expand --auto-accept`.
    pub generations: u32,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        Self {
            threshold: 0.75,
            max_candidates_per_seed: 25,
            generations: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphConfig {
    pub threshold: f64,
    /// Most frequent corpus tokens with a vector become graph nodes.
    pub vocab_size: usize,
    pub resolution: f64,
    pub seed: u64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            threshold: 0.75,
            vocab_size: 5000,
            resolution: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DenseKind {
    #[default]
    Table,
    External,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub view: LexiconView,
    pub dense: DenseKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub kind: ModelKind,
    /// Empty means the built-in grid.
    pub grid: Vec<Hyperparams>,
    pub k: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Logistic,
            grid: Vec::new(),
            k: 10,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn grid(&self) -> Vec<Hyperparams> {
        if self.grid.is_empty() {
            default_grid(self.seed)
        } else {
            self.grid.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceConfig {
    pub bind: String,
    /// Example posts shown per candidate.
    pub example_cap: usize,
    pub neighbor_count: usize,
    pub page_size: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8631".into(),
            example_cap: 5,
            neighbor_count: 5,
            page_size: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    pub sample_cap: usize,
    pub train_ratio: f64,
    pub split_seed: u64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            sample_cap: 20,
            train_ratio: 0.8,
            split_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_workdir")]
    pub workdir: PathBuf,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub expansion: ExpansionConfig,
    #[serde(default)]
    pub graph: GraphConfig,
    #[serde(default)]
    pub normalizer: NormalizerConfig,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub service: ServiceConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
}

fn default_workdir() -> PathBuf {
    "work".into()
}

impl Default for PipelineConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl PipelineConfig {
    /// Reads a config file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Failure::config(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.workdir);
        let Paths {
            embeddings,
            seed_lists,
            stopwords,
            blocklist,
            wordlist,
            corpus,
            external_vectors,
        } = &mut self.paths;
        for p in [embeddings, stopwords, blocklist, wordlist, corpus, external_vectors]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        seed_lists.iter_mut().for_each(fix);
    }

    pub fn validate(&self) -> Result<(), Failure> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Failure::config(format!("{name} must be in (0, 1], got {v}")))
            }
        };
        unit("expansion.threshold", self.expansion.threshold)?;
        unit("graph.threshold", self.graph.threshold)?;
        if self.expansion.max_candidates_per_seed == 0 {
            return Err(Failure::config("expansion.max_candidates_per_seed must be positive"));
        }
        if self.training.k < 2 {
            return Err(Failure::config(format!("training.k must be >= 2, got {}", self.training.k)));
        }
        if !(self.evaluation.train_ratio > 0.0 && self.evaluation.train_ratio < 1.0) {
            return Err(Failure::config("evaluation.train_ratio must be in (0, 1)"));
        }
        let p = &self.paths;
        let listed = [&p.embeddings, &p.stopwords, &p.blocklist, &p.wordlist, &p.corpus, &p.external_vectors];
        for path in listed.into_iter().flatten().chain(&p.seed_lists) {
            if !path.exists() {
                return Err(Failure::config(format!("configured file does not exist: {}", path.display())));
            }
        }
        Ok(())
    }

    pub fn require<'a>(&self, path: &'a Option<PathBuf>, name: &str) -> Result<&'a Path, Failure> {
        path.as_deref()
            .ok_or_else(|| Failure::config(format!("paths.{name} is not set in the config")))
    }
}
