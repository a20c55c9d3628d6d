//! Corpus handling for code-switched speech.
//!
//! An utterance couples a language-tagged transcript with a monolingual
//! translation and (for the synthetic task) a recipe for regenerating its
//! acoustic feature frames. Real annotation formats are turned into the same
//! representation by the parsers in [`parse`]; the synthetic bilingual task is
//! produced by [`toy`]; on-disk formats live in [`io`].

pub mod io;
pub mod parse;
pub mod toy;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::util::seeded_coin;

/// Which of the two languages of a pair a token or utterance belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LanguageTag {
    #[serde(rename = "l1")]
    L1,
    #[serde(rename = "l2")]
    L2,
}

impl LanguageTag {
    /// The other language of the pair.
    pub fn other(self) -> LanguageTag {
        match self {
            LanguageTag::L1 => LanguageTag::L2,
            LanguageTag::L2 => LanguageTag::L1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LanguageTag::L1 => "l1",
            LanguageTag::L2 => "l2",
        }
    }

    pub fn parse(s: &str) -> Option<LanguageTag> {
        match s {
            "l1" => Some(LanguageTag::L1),
            "l2" => Some(LanguageTag::L2),
            _ => None,
        }
    }
}

impl fmt::Display for LanguageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Binds the abstract tags to human-readable language names, e.g.
/// L1 = "spanish", L2 = "english". The names drive annotation parsing:
/// `lang="English"` attributes and `@s:eng` suffixes are resolved against
/// them case-insensitively.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguagePair {
    pub l1_name: String,
    pub l2_name: String,
}

impl LanguagePair {
    pub fn new(l1_name: &str, l2_name: &str) -> Self {
        LanguagePair { l1_name: l1_name.to_lowercase(), l2_name: l2_name.to_lowercase() }
    }

    pub fn name_of(&self, tag: LanguageTag) -> &str {
        match tag {
            LanguageTag::L1 => &self.l1_name,
            LanguageTag::L2 => &self.l2_name,
        }
    }

    /// Resolves a full language name (as used in `lang="..."` attributes).
    pub fn tag_for_name(&self, name: &str) -> Option<LanguageTag> {
        let lower = name.to_lowercase();
        if lower == self.l1_name {
            Some(LanguageTag::L1)
        } else if lower == self.l2_name {
            Some(LanguageTag::L2)
        } else {
            None
        }
    }

    /// Resolves a three-letter code (as used in `@s:eng` suffixes) by prefix:
    /// "eng" matches "english".
    pub fn tag_for_code(&self, code: &str) -> Option<LanguageTag> {
        let lower = code.to_lowercase();
        if lower.len() == 3 && self.l1_name.starts_with(&lower) {
            Some(LanguageTag::L1)
        } else if lower.len() == 3 && self.l2_name.starts_with(&lower) {
            Some(LanguageTag::L2)
        } else {
            None
        }
    }
}

/// One surface word with its language tag. Punctuation stays attached to its
/// word here; metrics strip it at evaluation time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedToken {
    pub surface: String,
    pub lang: LanguageTag,
}

/// A whole transcript as an ordered list of tagged tokens.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TaggedTranscript {
    pub tokens: Vec<TaggedToken>,
}

impl TaggedTranscript {
    pub fn new(tokens: Vec<TaggedToken>) -> Self {
        TaggedTranscript { tokens }
    }

    /// Clean text with annotation markup removed: surfaces joined by single
    /// spaces.
    pub fn clean_text(&self) -> String {
        let surfaces: Vec<&str> = self.tokens.iter().map(|t| t.surface.as_str()).collect();
        surfaces.join(" ")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token counts per language as (l1, l2).
    pub fn lang_counts(&self) -> (usize, usize) {
        let l1 = self.tokens.iter().filter(|t| t.lang == LanguageTag::L1).count();
        (l1, self.tokens.len() - l1)
    }
}

/// Errors from corpus construction and parsing.
#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("unclosed foreign tag opened at character {offset}")]
    UnclosedTag { offset: usize },
    #[error("nested foreign tag at character {offset}")]
    NestedTag { offset: usize },
    #[error("malformed annotation at character {offset}: {message}")]
    Markup { offset: usize, message: String },
    #[error("unknown language attribute \"{0}\"")]
    UnknownLanguage(String),
    #[error("unknown chat code \"{0}\"")]
    UnknownChatCode(String),
    #[error("transcript has no tokens")]
    EmptyTranscript,
    #[error("duplicate utterance id \"{0}\"")]
    DuplicateId(String),
    #[error("invalid corpus config: {0}")]
    InvalidConfig(String),
    #[error("character '{0}' is outside both toy language inventories")]
    UnknownChar(char),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad record at line {line}: {message}")]
    Record { line: usize, message: String },
    #[error("missing format header, expected \"{0}\"")]
    MissingHeader(&'static str),
}

/// Proportion of code-switched material in a transcript: the minority
/// language's share of the tokens. By construction it lies in [0, 0.5];
/// a monolingual transcript scores 0.
pub fn cs_proportion(t: &TaggedTranscript) -> Result<f64, CorpusError> {
    if t.is_empty() {
        return Err(CorpusError::EmptyTranscript);
    }
    let (l1, l2) = t.lang_counts();
    Ok(l1.min(l2) as f64 / t.len() as f64)
}

/// The matrix (majority) language of a transcript. An exact 50/50 split is
/// resolved by a deterministic coin derived from `seed`, so repeated calls
/// with the same arguments always agree.
pub fn matrix_language(t: &TaggedTranscript, seed: u64) -> Result<LanguageTag, CorpusError> {
    if t.is_empty() {
        return Err(CorpusError::EmptyTranscript);
    }
    let (l1, l2) = t.lang_counts();
    Ok(match l1.cmp(&l2) {
        std::cmp::Ordering::Greater => LanguageTag::L1,
        std::cmp::Ordering::Less => LanguageTag::L2,
        std::cmp::Ordering::Equal => {
            if seeded_coin(seed) {
                LanguageTag::L1
            } else {
                LanguageTag::L2
            }
        }
    })
}

/// One utterance: id, tagged transcript, monolingual translation, matrix
/// language label and a way to obtain feature frames (either a reference to
/// stored features or the generator seed for synthetic audio).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub transcript: TaggedTranscript,
    pub translation: String,
    pub matrix_lang: LanguageTag,
    /// Seed for regenerating synthetic feature frames; absent for parsed
    /// real-data utterances.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_seed: Option<u64>,
    /// Reference to externally stored frames; absent for synthetic data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames_ref: Option<String>,
    /// Number of feature frames, when known. Used by duration filtering and
    /// corpus statistics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_frames: Option<usize>,
}

impl Utterance {
    /// Number of embedded-language tokens (tokens not in the matrix language).
    pub fn embedded_token_count(&self) -> usize {
        self.transcript.tokens.iter().filter(|t| t.lang != self.matrix_lang).count()
    }

    pub fn is_code_switched(&self) -> bool {
        self.embedded_token_count() > 0
    }
}

/// Result of partitioning a corpus into code-switched and monolingual sets.
#[derive(Debug, Clone, Default)]
pub struct CorpusSplit {
    pub cs_set: Vec<Utterance>,
    pub mono_set: Vec<Utterance>,
    /// Maps utterance id to the split it was assigned to.
    pub provenance: BTreeMap<String, String>,
}

/// Partitions utterances: anything with at least one embedded-language token
/// goes to the code-switched set, the rest to the monolingual set. Order
/// within each set follows the input order. Duplicate ids are rejected.
pub fn split_corpus(utts: Vec<Utterance>) -> Result<CorpusSplit, CorpusError> {
    let mut split = CorpusSplit::default();
    for utt in utts {
        if split.provenance.contains_key(&utt.id) {
            return Err(CorpusError::DuplicateId(utt.id));
        }
        if utt.is_code_switched() {
            split.provenance.insert(utt.id.clone(), "cs".to_string());
            split.cs_set.push(utt);
        } else {
            split.provenance.insert(utt.id.clone(), "mono".to_string());
            split.mono_set.push(utt);
        }
    }
    Ok(split)
}

/// Drops utterances longer than `max_frames` (inclusive boundary: an
/// utterance of exactly `max_frames` is kept). Utterances with unknown frame
/// counts are kept. Logs how many were removed.
pub fn filter_by_duration(utts: Vec<Utterance>, max_frames: usize) -> Vec<Utterance> {
    let before = utts.len();
    let kept: Vec<Utterance> =
        utts.into_iter().filter(|u| u.num_frames.map_or(true, |n| n <= max_frames)).collect();
    let removed = before - kept.len();
    if removed > 0 {
        log::info!("duration filter removed {removed} of {before} utterances (> {max_frames} frames)");
    }
    kept
}

/// Per-set summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub utterances: usize,
    pub tokens: usize,
    /// Total frames / (100 frames per second) / 3600, for sets with known
    /// frame counts.
    pub hours_equivalent: f64,
    /// Fraction of utterances whose matrix language is L1 and L2.
    pub matrix_distribution: (f64, f64),
    /// Histogram over code-switching proportion with bucket width 0.05 on
    /// (0, 0.5]: bucket k covers (0.05k, 0.05(k+1)]. Fractions of the
    /// code-switched utterances; sums to 1 unless the set has none.
    pub cs_proportion_histogram: Vec<f64>,
}

/// Nominal frame rate used to report hours-equivalent.
pub const FRAMES_PER_SECOND: f64 = 100.0;

/// Number of histogram buckets covering (0, 0.5] at width 0.05.
pub const CS_HISTOGRAM_BUCKETS: usize = 10;

/// Computes summary statistics over a set of utterances. The proportion
/// histogram is computed from integer token counts so bucket boundaries are
/// exact: a proportion of embedded/total lands in bucket
/// ceil(20 * embedded / total) - 1.
pub fn corpus_stats(utts: &[Utterance]) -> CorpusStats {
    let utterances = utts.len();
    let tokens: usize = utts.iter().map(|u| u.transcript.len()).sum();
    let frames: usize = utts.iter().filter_map(|u| u.num_frames).sum();
    let hours_equivalent = frames as f64 / FRAMES_PER_SECOND / 3600.0;
    let l1 = utts.iter().filter(|u| u.matrix_lang == LanguageTag::L1).count();
    let matrix_distribution = if utterances == 0 {
        (0.0, 0.0)
    } else {
        (l1 as f64 / utterances as f64, (utterances - l1) as f64 / utterances as f64)
    };

    let mut buckets = vec![0usize; CS_HISTOGRAM_BUCKETS];
    let mut cs_total = 0usize;
    for utt in utts {
        let embedded = utt.embedded_token_count();
        if embedded == 0 {
            continue;
        }
        let total = utt.transcript.len();
        // ceil(20e/n) - 1 in integer arithmetic; proportions are capped at
        // 0.5 so the index stays below CS_HISTOGRAM_BUCKETS.
        let idx = (20 * embedded + total - 1) / total - 1;
        let idx = idx.min(CS_HISTOGRAM_BUCKETS - 1);
        buckets[idx] += 1;
        cs_total += 1;
    }
    let cs_proportion_histogram = if cs_total == 0 {
        vec![0.0; CS_HISTOGRAM_BUCKETS]
    } else {
        buckets.iter().map(|&c| c as f64 / cs_total as f64).collect()
    };

    CorpusStats { utterances, tokens, hours_equivalent, matrix_distribution, cs_proportion_histogram }
}
