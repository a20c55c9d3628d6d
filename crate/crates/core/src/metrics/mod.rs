//! Evaluation and analysis: error rates, translation overlap scores,
//! switched-span accuracy, bootstrap significance, and regression of
//! scores on switching intensity. Everything here is a pure function; the
//! only randomness is the seeded generator the bootstrap receives.

pub mod bleu;
pub mod charcut;
pub mod edit;
pub mod spans;
pub mod stats;
pub mod text;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("reference is empty")]
    EmptyReference,
    #[error("paired inputs differ in length: {left} vs {right}")]
    MismatchedLengths { left: usize, right: usize },
    #[error("need more segments, got {0}")]
    TooFewSegments(usize),
    #[error("no switched spans in the reference set")]
    NoSpans,
    #[error("regressor has zero variance")]
    ZeroVarianceRegressor,
}

/// The reported metrics and their improvement directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricKind {
    Wer,
    Cer,
    Bleu,
    CharCut,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] =
        [MetricKind::Wer, MetricKind::Cer, MetricKind::Bleu, MetricKind::CharCut];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Wer => "WER",
            MetricKind::Cer => "CER",
            MetricKind::Bleu => "BLEU",
            MetricKind::CharCut => "CharCut",
        }
    }

    pub fn direction(self) -> stats::Direction {
        match self {
            MetricKind::Bleu => stats::Direction::HigherBetter,
            _ => stats::Direction::LowerBetter,
        }
    }

    /// Transcript metrics score the transcript output; the others score the
    /// translation output.
    pub fn on_transcript(self) -> bool {
        matches!(self, MetricKind::Wer | MetricKind::Cer)
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub kind: MetricKind,
    pub value: f64,
}

pub use bleu::{bleu, bleu_from_stats, bleu_stat, corpus_bleu, BleuStat};
pub use charcut::{charcut, charcut_stat, corpus_charcut, CharCutStat, MIN_MATCH};
pub use edit::{cer, cer_stat, corpus_rate, edit_distance, wer, wer_stat, EditStat};
pub use spans::{cs_span_accuracy, embedded_spans};
pub use stats::{
    bootstrap_significance, score_vs_proportion, Direction, RegressionResult,
    SignificanceResult, Verdict, ALPHA, DEFAULT_RESAMPLES,
};
pub use text::{collapse_whitespace, is_punctuation, strip_punctuation, tokenize_13a};
