//! Post-hoc analyses over decoded outputs: how often embedded spans come
//! through intact, how the word error rate moves with the switched share of
//! a sentence, and the distribution of that share over the corpus.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{cs_proportion, Utterance};
use crate::inference::OutputRecord;
use crate::metrics::{cs_span_accuracy, score_vs_proportion, wer, MetricError, RegressionResult};

use super::{io_err, ExperimentError};

pub const ANALYSIS_HEADER: &str = "#cs-analysis v1";

/// Fixed-width histogram over `[lo, hi]`; `edges` has one more entry than
/// `counts`. Values outside the range land in the boundary bins, and a
/// value exactly on `hi` lands in the last bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

pub fn histogram(
    values: &[f64],
    bins: usize,
    lo: f64,
    hi: f64,
) -> Result<Histogram, ExperimentError> {
    if bins == 0 {
        return Err(ExperimentError::Invalid("histogram needs at least one bin".into()));
    }
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(ExperimentError::Invalid(format!("bad histogram range [{lo}, {hi}]")));
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0usize; bins];
    for &v in values {
        if !v.is_finite() {
            return Err(ExperimentError::Invalid(format!("non-finite histogram value {v}")));
        }
        let idx = (((v - lo) / width) as isize).clamp(0, bins as isize - 1) as usize;
        counts[idx] += 1;
    }
    Ok(Histogram { edges, counts })
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Share of counted values sitting in bins whose lower edge is at or
    /// above `threshold`. Exact only when `threshold` is a bin edge.
    pub fn mass_above(&self, threshold: f64) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let above: usize = self
            .counts
            .iter()
            .enumerate()
            .filter(|(i, _)| self.edges[*i] >= threshold)
            .map(|(_, c)| c)
            .sum();
        above as f64 / total as f64
    }

    /// One line per bin: the range, the count and a proportional bar.
    pub fn render_rows(&self) -> Vec<String> {
        let max = self.counts.iter().copied().max().unwrap_or(0).max(1);
        self.counts
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let bar = "#".repeat((c * 40).div_ceil(max).min(40));
                format!("{:5.2} .. {:5.2}  {c:6}  {bar}", self.edges[i], self.edges[i + 1])
            })
            .collect()
    }
}

/// Analyses attached to one evaluated cell, computed from its persisted
/// code-switched test outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAnalysis {
    /// Fraction of embedded spans reproduced verbatim in the transcripts;
    /// absent when the reference set has no embedded spans.
    pub span_accuracy: Option<f64>,
    /// Per-utterance word error rate regressed on the switched-word
    /// proportion; absent when the proportion does not vary or there are
    /// fewer than three utterances.
    pub wer_vs_switching: Option<RegressionResult>,
    pub n_utterances: usize,
}

/// Pairs outputs with their references by utterance id and runs the span
/// and regression analyses. Every output must have a reference.
pub fn analyze_cell(
    refs: &[Utterance],
    outputs: &[OutputRecord],
) -> Result<CellAnalysis, ExperimentError> {
    let by_id: BTreeMap<&str, &Utterance> =
        refs.iter().map(|u| (u.id.as_str(), u)).collect();
    let mut paired = Vec::with_capacity(outputs.len());
    for rec in outputs {
        let utt = by_id.get(rec.id.as_str()).ok_or_else(|| {
            ExperimentError::Invalid(format!("output {} has no reference utterance", rec.id))
        })?;
        paired.push((rec, *utt));
    }

    let span_accuracy = match cs_span_accuracy(
        paired.iter().map(|(rec, utt)| (rec.transcript.as_str(), &utt.transcript, utt.matrix_lang)),
    ) {
        Ok(acc) => Some(acc),
        Err(MetricError::NoSpans) => None,
        Err(e) => return Err(e.into()),
    };

    let mut scores = Vec::with_capacity(paired.len());
    let mut proportions = Vec::with_capacity(paired.len());
    for (rec, utt) in &paired {
        scores.push(wer(&rec.transcript, &utt.transcript.clean_text())?);
        proportions.push(cs_proportion(&utt.transcript)?);
    }
    let wer_vs_switching = match score_vs_proportion(&scores, &proportions) {
        Ok(r) => Some(r),
        Err(MetricError::ZeroVarianceRegressor) | Err(MetricError::TooFewSegments(_)) => None,
        Err(e) => return Err(e.into()),
    };

    Ok(CellAnalysis { span_accuracy, wer_vs_switching, n_utterances: paired.len() })
}

pub fn write_analysis(path: &Path, analysis: &CellAnalysis) -> Result<(), ExperimentError> {
    let body = serde_json::to_string_pretty(analysis)
        .map_err(|e| ExperimentError::Invalid(e.to_string()))?;
    std::fs::write(path, format!("{ANALYSIS_HEADER}\n{body}\n")).map_err(|e| io_err(path, e))
}

pub fn read_analysis(path: &Path) -> Result<CellAnalysis, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let body = text
        .strip_prefix(ANALYSIS_HEADER)
        .ok_or(ExperimentError::MissingHeader(ANALYSIS_HEADER))?;
    serde_json::from_str(body).map_err(|e| ExperimentError::Invalid(e.to_string()))
}
