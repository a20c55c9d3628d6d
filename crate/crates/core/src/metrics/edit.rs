//! Word and character error rates via uniform-cost minimum edit distance.
//!
//! Corpus-level rates aggregate total edits over total reference length,
//! not the mean of per-segment rates, so long segments weigh more.

use super::text::collapse_whitespace;
use super::MetricError;

/// Uniform-cost Levenshtein distance (substitution, insertion, deletion all
/// cost one), two-row dynamic program.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0usize; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            curr[j + 1] = sub.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// Edits and reference length for one segment; corpus rates are ratios of
/// their sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct EditStat {
    pub edits: usize,
    pub ref_len: usize,
}

/// Word-level edit statistics. The reference must contain at least one word.
pub fn wer_stat(hyp: &str, reference: &str) -> Result<EditStat, MetricError> {
    let h: Vec<&str> = hyp.split_whitespace().collect();
    let r: Vec<&str> = reference.split_whitespace().collect();
    if r.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    Ok(EditStat { edits: edit_distance(&h, &r), ref_len: r.len() })
}

/// Character-level edit statistics over whitespace-collapsed text (single
/// spaces count as characters).
pub fn cer_stat(hyp: &str, reference: &str) -> Result<EditStat, MetricError> {
    let h: Vec<char> = collapse_whitespace(hyp).chars().collect();
    let r: Vec<char> = collapse_whitespace(reference).chars().collect();
    if r.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    Ok(EditStat { edits: edit_distance(&h, &r), ref_len: r.len() })
}

pub fn wer(hyp: &str, reference: &str) -> Result<f64, MetricError> {
    let s = wer_stat(hyp, reference)?;
    Ok(s.edits as f64 / s.ref_len as f64)
}

pub fn cer(hyp: &str, reference: &str) -> Result<f64, MetricError> {
    let s = cer_stat(hyp, reference)?;
    Ok(s.edits as f64 / s.ref_len as f64)
}

/// Total edits over total reference length.
pub fn corpus_rate(stats: &[EditStat]) -> Result<f64, MetricError> {
    if stats.is_empty() {
        return Err(MetricError::TooFewSegments(0));
    }
    let edits: usize = stats.iter().map(|s| s.edits).sum();
    let total: usize = stats.iter().map(|s| s.ref_len).sum();
    Ok(edits as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_sequences_have_zero_rate() {
        assert_eq!(wer("uno dos tres", "uno dos tres").unwrap(), 0.0);
        assert_eq!(cer("uno dos", "uno dos").unwrap(), 0.0);
    }

    #[test]
    fn one_substitution_one_deletion() {
        // "a b c d" vs "a x c": substitute b, delete d.
        assert_eq!(wer("a x c", "a b c d").unwrap(), 0.5);
    }

    #[test]
    fn empty_hypothesis_is_all_deletions() {
        assert_eq!(wer("", "w x y z").unwrap(), 1.0);
    }

    #[test]
    fn empty_reference_is_an_error() {
        assert!(matches!(wer("algo", ""), Err(MetricError::EmptyReference)));
        assert!(matches!(cer("algo", "   "), Err(MetricError::EmptyReference)));
    }

    #[test]
    fn rate_ignores_leading_and_trailing_whitespace() {
        assert_eq!(wer("  a b  ", "a b").unwrap(), 0.0);
        assert_eq!(cer(" a b ", "a b").unwrap(), 0.0);
    }

    #[test]
    fn corpus_rate_is_ratio_of_sums() {
        let stats = vec![
            EditStat { edits: 1, ref_len: 2 },
            EditStat { edits: 0, ref_len: 6 },
        ];
        // (1+0)/(2+6), not mean(0.5, 0.0).
        assert_eq!(corpus_rate(&stats).unwrap(), 0.125);
    }

    /// Independent oracle: plain recursion with memoization, a different
    /// formulation from the two-row iteration above.
    fn slow_distance(a: &[u8], b: &[u8]) -> usize {
        fn go(a: &[u8], b: &[u8], i: usize, j: usize, memo: &mut Vec<Vec<Option<usize>>>) -> usize {
            if i == a.len() {
                return b.len() - j;
            }
            if j == b.len() {
                return a.len() - i;
            }
            if let Some(v) = memo[i][j] {
                return v;
            }
            let v = if a[i] == b[j] {
                go(a, b, i + 1, j + 1, memo)
            } else {
                let sub = go(a, b, i + 1, j + 1, memo);
                let del = go(a, b, i + 1, j, memo);
                let ins = go(a, b, i, j + 1, memo);
                1 + sub.min(del).min(ins)
            };
            memo[i][j] = Some(v);
            v
        }
        let mut memo = vec![vec![None; b.len() + 1]; a.len() + 1];
        go(a, b, 0, 0, &mut memo)
    }

    #[test]
    fn distance_matches_recursive_oracle_on_random_pairs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(402);
        for _ in 0..500 {
            let n = rng.gen_range(0..12);
            let m = rng.gen_range(0..12);
            let a: Vec<u8> = (0..n).map(|_| rng.gen_range(b'a'..b'd')).collect();
            let b: Vec<u8> = (0..m).map(|_| rng.gen_range(b'a'..b'd')).collect();
            assert_eq!(edit_distance(&a, &b), slow_distance(&a, &b), "{a:?} vs {b:?}");
        }
    }
}
