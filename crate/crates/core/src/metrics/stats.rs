//! Statistical machinery: paired bootstrap comparison against the best
//! system, and least-squares regression of per-utterance scores on a
//! switching regressor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MetricError;

pub const ALPHA: f64 = 0.05;
pub const DEFAULT_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    LowerBetter,
    HigherBetter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    /// The reference system of the comparison (assigned by the caller, not
    /// by the test itself).
    Best,
    /// Not significantly different from the best.
    SimilarToBest,
    Worse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub p_value: f64,
    pub alpha: f64,
    pub n_resamples: usize,
    pub verdict: Verdict,
}

/// Paired bootstrap: resamples segment indices with replacement and counts
/// how often the challenger's corpus metric is at least as good as the
/// best system's on the same resample. Segments are first put into a
/// canonical content order, so the result does not depend on input order.
///
/// `corpus` turns a bag of per-segment statistics into the corpus metric;
/// pass the real aggregation (ratio of sums, pooled counts), not a mean of
/// per-segment scores.
pub fn bootstrap_significance<S, F>(
    best: &[S],
    other: &[S],
    corpus: F,
    direction: Direction,
    n_resamples: usize,
    seed: u64,
) -> Result<SignificanceResult, MetricError>
where
    S: Clone + Serialize,
    F: Fn(&[S]) -> f64,
{
    if best.len() != other.len() {
        return Err(MetricError::MismatchedLengths { left: best.len(), right: other.len() });
    }
    let n = best.len();
    if n < 2 {
        return Err(MetricError::TooFewSegments(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let keys: Vec<String> = (0..n)
        .map(|i| {
            serde_json::to_string(&(&best[i], &other[i])).expect("segment stats serialize")
        })
        .collect();
    order.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    let best: Vec<S> = order.iter().map(|&i| best[i].clone()).collect();
    let other: Vec<S> = order.iter().map(|&i| other[i].clone()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    let mut best_sample = Vec::with_capacity(n);
    let mut other_sample = Vec::with_capacity(n);
    for _ in 0..n_resamples {
        best_sample.clear();
        other_sample.clear();
        for _ in 0..n {
            let i = rng.gen_range(0..n);
            best_sample.push(best[i].clone());
            other_sample.push(other[i].clone());
        }
        let mb = corpus(&best_sample);
        let mo = corpus(&other_sample);
        let at_least_as_good = match direction {
            Direction::LowerBetter => mo <= mb,
            Direction::HigherBetter => mo >= mb,
        };
        if at_least_as_good {
            hits += 1;
        }
    }
    let p_value = hits as f64 / n_resamples as f64;
    let verdict = if p_value >= ALPHA { Verdict::SimilarToBest } else { Verdict::Worse };
    Ok(SignificanceResult { p_value, alpha: ALPHA, n_resamples, verdict })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of per-utterance scores on a switching regressor
/// (the switched-word proportion, or the switched-word count). At least
/// three points; the regressor must vary.
pub fn score_vs_proportion(
    scores: &[f64],
    regressor: &[f64],
) -> Result<RegressionResult, MetricError> {
    if scores.len() != regressor.len() {
        return Err(MetricError::MismatchedLengths {
            left: scores.len(),
            right: regressor.len(),
        });
    }
    let n = scores.len();
    if n < 3 {
        return Err(MetricError::TooFewSegments(n));
    }
    let nf = n as f64;
    let mean_x = regressor.iter().sum::<f64>() / nf;
    let mean_y = scores.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in regressor.iter().zip(scores) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if sxx == 0.0 {
        return Err(MetricError::ZeroVarianceRegressor);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (&x, &y) in regressor.iter().zip(scores) {
        let fitted = intercept + slope * x;
        ss_res += (y - fitted) * (y - fitted);
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    let r_squared = if ss_tot == 0.0 {
        0.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(RegressionResult { slope, intercept, r_squared })
}
