//! Joint transcription and translation of code-switched speech, at desk
//! scale.
//!
//! The crate implements the full experimental stack for comparing cascaded
//! and end-to-end architectures on bilingual, code-switched input: a
//! synthetic bilingual speech task plus parsers for real annotation formats
//! ([`corpus`]), a small f64 transformer layer library with exact gradients
//! and seven parameter-sharing plans ([`model`]), deterministic training with
//! a tri-stage schedule ([`training`]), greedy/beam inference with language
//! identification routing ([`inference`]), the evaluation metrics
//! ([`metrics`]) and the experiment matrix and report machinery
//! ([`experiments`]).

pub mod corpus;
pub mod experiments;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod training;
pub mod util;

pub use corpus::{
    cs_proportion, matrix_language, split_corpus, CorpusError, CorpusSplit, LanguagePair,
    LanguageTag, TaggedToken, TaggedTranscript, Utterance,
};
