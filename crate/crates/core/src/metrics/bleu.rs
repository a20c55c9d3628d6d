//! Single-reference BLEU: lowercase, WMT-style tokenization, clipped 1-4
//! gram precisions, exponential-decay smoothing for zero counts, brevity
//! penalty. Scores are on the 0-100 scale.

use std::collections::HashMap;

use super::text::tokenize_13a;
use super::MetricError;

/// Scaling constant of the zero-count smoothing: the n-th zero-count order
/// receives precision ln(hyp_len) / (2^k_zero · K · total_n).
pub const SMOOTHING_K: f64 = 5.0;

pub const MAX_ORDER: usize = 4;

/// Clipped n-gram counts of one segment; corpus scores sum these fields
/// over segments before applying the same formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub struct BleuStat {
    pub matched: [usize; MAX_ORDER],
    pub total: [usize; MAX_ORDER],
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuStat {
    pub fn accumulate(&mut self, other: &BleuStat) {
        for n in 0..MAX_ORDER {
            self.matched[n] += other.matched[n];
            self.total[n] += other.total[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts: HashMap<&[String], usize> = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Lowercases, tokenizes, and counts clipped n-gram matches. The reference
/// must be non-empty after tokenization.
pub fn bleu_stat(hyp: &str, reference: &str) -> Result<BleuStat, MetricError> {
    let h = tokenize_13a(&hyp.to_lowercase());
    let r = tokenize_13a(&reference.to_lowercase());
    if r.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let mut stat = BleuStat { hyp_len: h.len(), ref_len: r.len(), ..BleuStat::default() };
    for n in 1..=MAX_ORDER {
        let rc = ngram_counts(&r, n);
        let hc = ngram_counts(&h, n);
        stat.total[n - 1] = h.len().saturating_sub(n - 1).max(0);
        stat.matched[n - 1] = hc
            .iter()
            .map(|(gram, &c)| c.min(rc.get(gram).copied().unwrap_or(0)))
            .sum();
    }
    Ok(stat)
}

/// BLEU from accumulated counts. Orders with a zero matched count take the
/// smoothed precision ln(hyp_len) / (2^k · K · total) with k counting zero
/// orders from one; a hypothesis of length ≤ 1 cannot be smoothed, and an
/// empty hypothesis scores 0.
pub fn bleu_from_stats(stat: &BleuStat) -> f64 {
    if stat.hyp_len == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    let mut zero_orders = 0u32;
    for n in 0..MAX_ORDER {
        let total = stat.total[n].max(1) as f64;
        let p = if stat.matched[n] > 0 {
            stat.matched[n] as f64 / total
        } else if stat.hyp_len > 1 {
            zero_orders += 1;
            (stat.hyp_len as f64).ln() / (2f64.powi(zero_orders as i32) * SMOOTHING_K * total)
        } else {
            return 0.0;
        };
        log_sum += p.ln();
    }
    let bp = if stat.hyp_len >= stat.ref_len {
        1.0
    } else {
        (1.0 - stat.ref_len as f64 / stat.hyp_len as f64).exp()
    };
    100.0 * bp * (log_sum / MAX_ORDER as f64).exp()
}

pub fn bleu(hyp: &str, reference: &str) -> Result<f64, MetricError> {
    Ok(bleu_from_stats(&bleu_stat(hyp, reference)?))
}

/// Corpus score: counts pooled over all segments, then the same formula.
pub fn corpus_bleu<'a>(stats: impl IntoIterator<Item = &'a BleuStat>) -> f64 {
    let mut pooled = BleuStat::default();
    for s in stats {
        pooled.accumulate(s);
    }
    bleu_from_stats(&pooled)
}
