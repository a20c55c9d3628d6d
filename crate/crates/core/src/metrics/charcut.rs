//! Character-overlap distance: iterative greedy longest-common-substring
//! matching with a minimum match length, order-preserving (matches never
//! cross), scored as unmatched character mass over total character mass.
//! 0 means identical strings, 1 means nothing matched; lower is better.

use super::MetricError;

/// Shortest substring that may count as a match.
pub const MIN_MATCH: usize = 3;

/// Unmatched character count and total character mass (|hyp| + |ref|) of
/// one segment; the corpus score is the ratio of their sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CharCutStat {
    pub unmatched: usize,
    pub mass: usize,
}

/// Longest common substring of `hyp[h0..h1]` and `reference[r0..r1]`, as
/// (hyp_start, ref_start, len); ties prefer the earliest hypothesis
/// position, then the earliest reference position.
fn longest_common(
    hyp: &[char],
    reference: &[char],
    h: (usize, usize),
    r: (usize, usize),
) -> Option<(usize, usize, usize)> {
    let (h0, h1) = h;
    let (r0, r1) = r;
    if h1 - h0 < MIN_MATCH || r1 - r0 < MIN_MATCH {
        return None;
    }
    let mut best: Option<(usize, usize, usize)> = None;
    // suffix[j] = length of the common substring ending at (i-1, j-1).
    let mut prev = vec![0usize; r1 - r0 + 1];
    let mut curr = vec![0usize; r1 - r0 + 1];
    for i in h0..h1 {
        for j in r0..r1 {
            let k = j - r0;
            curr[k + 1] = if hyp[i] == reference[j] { prev[k] + 1 } else { 0 };
            let len = curr[k + 1];
            if len >= MIN_MATCH {
                let cand = (i + 1 - len, j + 1 - len, len);
                let better = match best {
                    None => true,
                    Some((bh, br, bl)) => {
                        len > bl || (len == bl && (cand.0, cand.1) < (bh, br))
                    }
                };
                if better {
                    best = Some(cand);
                }
            }
        }
        std::mem::swap(&mut prev, &mut curr);
        curr.fill(0);
    }
    best
}

fn matched_mass(hyp: &[char], reference: &[char], h: (usize, usize), r: (usize, usize)) -> usize {
    match longest_common(hyp, reference, h, r) {
        None => 0,
        Some((hs, rs, len)) => {
            // The match splits both strings; later matches may not cross it.
            2 * len
                + matched_mass(hyp, reference, (h.0, hs), (r.0, rs))
                + matched_mass(hyp, reference, (hs + len, h.1), (rs + len, r.1))
        }
    }
}

pub fn charcut_stat(hyp: &str, reference: &str) -> CharCutStat {
    let h: Vec<char> = hyp.chars().collect();
    let r: Vec<char> = reference.chars().collect();
    let mass = h.len() + r.len();
    if h == r {
        // Covers strings shorter than the minimum match length too.
        return CharCutStat { unmatched: 0, mass };
    }
    let matched = matched_mass(&h, &r, (0, h.len()), (0, r.len()));
    CharCutStat { unmatched: mass - matched, mass }
}

/// Segment score; two empty strings are identical and score 0.
pub fn charcut(hyp: &str, reference: &str) -> f64 {
    let s = charcut_stat(hyp, reference);
    if s.mass == 0 {
        0.0
    } else {
        s.unmatched as f64 / s.mass as f64
    }
}

/// Total unmatched mass over total mass.
pub fn corpus_charcut(stats: &[CharCutStat]) -> Result<f64, MetricError> {
    if stats.is_empty() {
        return Err(MetricError::TooFewSegments(0));
    }
    let unmatched: usize = stats.iter().map(|s| s.unmatched).sum();
    let mass: usize = stats.iter().map(|s| s.mass).sum();
    if mass == 0 {
        return Ok(0.0);
    }
    Ok(unmatched as f64 / mass as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    #[test]
    fn identical_strings_score_zero() {
        assert_eq!(charcut("resulta que si", "resulta que si"), 0.0);
        assert_eq!(charcut("ab", "ab"), 0.0);
        assert_eq!(charcut("", ""), 0.0);
    }

    #[test]
    fn disjoint_alphabets_score_one() {
        assert_eq!(charcut("aaaa", "zzzz"), 1.0);
    }

    #[test]
    fn partial_overlap_counts_unmatched_mass() {
        // "abcdef" vs "abcxyz": only "abc" matches; 6 of 12 chars unmatched.
        assert_eq!(charcut("abcdef", "abcxyz"), 0.5);
    }

    #[test]
    fn short_matches_below_the_minimum_do_not_count() {
        // Common substrings of length 2 only.
        assert_eq!(charcut("ab cd", "ba dc"), 1.0);
    }

    #[test]
    fn reordered_blocks_are_not_free() {
        // Swapping halves must not score 0: matches may not cross.
        let v = charcut("abcdef", "defabc");
        assert!(v > 0.0 && v < 1.0, "{v}");
        assert_eq!(v, 0.5);
    }

    #[test]
    fn score_is_always_within_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let len_h = rng.gen_range(0..15);
            let len_r = rng.gen_range(0..15);
            let h: String = (0..len_h).map(|_| (b'a' + rng.gen_range(0..3)) as char).collect();
            let r: String = (0..len_r).map(|_| (b'a' + rng.gen_range(0..3)) as char).collect();
            let v = charcut(&h, &r);
            assert!((0.0..=1.0).contains(&v), "{h:?} vs {r:?} -> {v}");
            if v == 0.0 {
                assert_eq!(h, r, "zero score must mean equality");
            }
        }
    }

    /// Exhaustive oracle: the best possible order-preserving cover by
    /// common substrings of length ≥ MIN_MATCH, found by trying every
    /// admissible match in every region.
    fn optimal_matched_mass(
        hyp: &[char],
        reference: &[char],
        h: (usize, usize),
        r: (usize, usize),
        memo: &mut HashMap<(usize, usize, usize, usize), usize>,
    ) -> usize {
        let key = (h.0, h.1, r.0, r.1);
        if let Some(&v) = memo.get(&key) {
            return v;
        }
        let mut best = 0;
        for hs in h.0..h.1 {
            for rs in r.0..r.1 {
                let mut len = 0;
                while hs + len < h.1 && rs + len < r.1 && hyp[hs + len] == reference[rs + len] {
                    len += 1;
                    if len >= MIN_MATCH {
                        let total = 2 * len
                            + optimal_matched_mass(hyp, reference, (h.0, hs), (r.0, rs), memo)
                            + optimal_matched_mass(
                                hyp,
                                reference,
                                (hs + len, h.1),
                                (rs + len, r.1),
                                memo,
                            );
                        best = best.max(total);
                    }
                }
            }
        }
        memo.insert(key, best);
        best
    }

    /// Independent, deliberately naive restatement of the matching rule:
    /// scan every start pair for the longest extension, take the longest
    /// match (earliest hypothesis position, then earliest reference
    /// position on ties), and recurse into the two regions it leaves.
    fn naive_greedy_mass(hyp: &[char], reference: &[char]) -> usize {
        let mut best: Option<(usize, usize, usize)> = None;
        for hs in 0..hyp.len() {
            for rs in 0..reference.len() {
                let mut len = 0;
                while hs + len < hyp.len()
                    && rs + len < reference.len()
                    && hyp[hs + len] == reference[rs + len]
                {
                    len += 1;
                }
                if len >= MIN_MATCH && best.map_or(true, |(_, _, bl)| len > bl) {
                    best = Some((hs, rs, len));
                }
            }
        }
        match best {
            None => 0,
            Some((hs, rs, len)) => {
                2 * len
                    + naive_greedy_mass(&hyp[..hs], &reference[..rs])
                    + naive_greedy_mass(&hyp[hs + len..], &reference[rs + len..])
            }
        }
    }

    #[test]
    fn greedy_matching_agrees_with_a_naive_reimplementation() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for case in 0..400 {
            // Half the cases stress tiny two-letter strings where ties and
            // overlaps are dense; the rest use a wider alphabet and length.
            let (max_len, letters) = if case % 2 == 0 { (12, 2) } else { (20, 3) };
            let len_h = rng.gen_range(0..=max_len);
            let len_r = rng.gen_range(0..=max_len);
            let h: String =
                (0..len_h).map(|_| (b'a' + rng.gen_range(0..letters)) as char).collect();
            let r: String =
                (0..len_r).map(|_| (b'a' + rng.gen_range(0..letters)) as char).collect();
            let hc: Vec<char> = h.chars().collect();
            let rc: Vec<char> = r.chars().collect();
            let fast = matched_mass(&hc, &rc, (0, hc.len()), (0, rc.len()));
            assert_eq!(fast, naive_greedy_mass(&hc, &rc), "{h:?} vs {r:?}");
        }
    }

    /// The greedy rule is the specified behavior, not a shortest-path
    /// search: its cover can never exceed the optimal one, and usually
    /// meets it, but taking the longest match first may block a better
    /// pair of shorter matches.
    #[test]
    fn greedy_cover_is_bounded_by_the_exhaustive_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut equal = 0usize;
        let mut total = 0usize;
        for _ in 0..400 {
            let len_h = rng.gen_range(0..=12);
            let len_r = rng.gen_range(0..=12);
            let h: String = (0..len_h).map(|_| (b'a' + rng.gen_range(0..2)) as char).collect();
            let r: String = (0..len_r).map(|_| (b'a' + rng.gen_range(0..2)) as char).collect();
            if h == r {
                continue;
            }
            let hc: Vec<char> = h.chars().collect();
            let rc: Vec<char> = r.chars().collect();
            let greedy = matched_mass(&hc, &rc, (0, hc.len()), (0, rc.len()));
            let mut memo = HashMap::new();
            let optimal =
                optimal_matched_mass(&hc, &rc, (0, hc.len()), (0, rc.len()), &mut memo);
            assert!(greedy <= optimal, "{h:?} vs {r:?}: greedy {greedy} > optimal {optimal}");
            total += 1;
            if greedy == optimal {
                equal += 1;
            }
        }
        // The two rules coincide on the overwhelming majority of inputs.
        assert!(equal * 10 >= total * 9, "only {equal} of {total} cases agreed");

        // A case where the longest-first choice costs mass: the greedy rule
        // takes "abbba" (mass 10) and splits both strings around it, hiding
        // the disjoint pair "bab" + "bba" (mass 12) the optimum finds.
        let hc: Vec<char> = "babbbaaaaaa".chars().collect();
        let rc: Vec<char> = "babaabbba".chars().collect();
        assert_eq!(matched_mass(&hc, &rc, (0, hc.len()), (0, rc.len())), 10);
        let mut memo = HashMap::new();
        assert_eq!(optimal_matched_mass(&hc, &rc, (0, hc.len()), (0, rc.len()), &mut memo), 12);
    }
}
