//! Corpus BLEU and chrF++ compatible with the standard toolkit's defaults,
//! tokenizers, and clients for external neural scorers.

pub mod bleu;
pub mod chrf;
pub mod format;
pub mod neural;
pub mod tokenize;

pub use bleu::{bleu_corpus, BleuScore};
pub use chrf::{chrf_corpus, ChrFScore};
pub use format::{format_neural, format_text_metric, parse_score};
pub use neural::{neural_score, NeuralReport, NeuralScore, NeuralScorer, ScorerConfig, StubFunction};
pub use tokenize::{tokenize, TokenizerKind};
