//! Adaptive toxic-lexicon engine.
//!
//! Seed lexicons are sanitized, grown through embedding-similarity expansion
//! and human review, matched against obfuscated text, and turned into hybrid
//! features for linear classifiers.

pub mod classify;
pub mod corpus;
pub mod embedding;
pub mod evaluation;
pub mod features;
pub mod graph;
pub mod lexicon;
pub mod normalize;

pub use corpus::{Corpus, Label, Post};
pub use embedding::{EmbeddingTable, Pooling};
pub use lexicon::{FrozenLexicon, Lexicon, LexiconEntry, LexiconView, Status};
