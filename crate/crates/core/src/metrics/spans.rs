//! Exact-match accuracy on switched spans: how often the maximal runs of
//! embedded-language words from a reference transcript appear verbatim,
//! word-boundary aligned, in the system output. A lower bound on switching
//! performance: paraphrases and partial matches count as misses.

use crate::corpus::{LanguageTag, TaggedTranscript};

use super::text::strip_punctuation;
use super::MetricError;

/// Maximal runs of words tagged with the embedded (non-matrix) language,
/// with per-word punctuation stripping applied.
pub fn embedded_spans(transcript: &TaggedTranscript, matrix: LanguageTag) -> Vec<Vec<String>> {
    let mut spans = Vec::new();
    let mut current: Vec<String> = Vec::new();
    for token in &transcript.tokens {
        if token.lang != matrix {
            let w = strip_punctuation(&token.surface);
            if !w.is_empty() {
                current.push(w);
            }
        } else if !current.is_empty() {
            spans.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        spans.push(current);
    }
    spans
}

fn contains_span(haystack: &[String], span: &[String]) -> bool {
    !span.is_empty() && haystack.windows(span.len()).any(|w| w == span)
}

/// Matched spans over total spans across the whole set. Each item pairs a
/// system output text with the reference transcript it answers and that
/// reference's matrix language. A set without any embedded spans has no
/// defined accuracy and errors.
pub fn cs_span_accuracy<'a, I>(items: I) -> Result<f64, MetricError>
where
    I: IntoIterator<Item = (&'a str, &'a TaggedTranscript, LanguageTag)>,
{
    let mut total = 0usize;
    let mut matched = 0usize;
    for (output, reference, matrix) in items {
        let spans = embedded_spans(reference, matrix);
        if spans.is_empty() {
            continue;
        }
        let words: Vec<String> =
            strip_punctuation(output).split_whitespace().map(str::to_string).collect();
        for span in &spans {
            total += 1;
            if contains_span(&words, span) {
                matched += 1;
            }
        }
    }
    if total == 0 {
        return Err(MetricError::NoSpans);
    }
    Ok(matched as f64 / total as f64)
}
