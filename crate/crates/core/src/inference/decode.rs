//! Autoregressive sequence decoding over an arbitrary next-token logits
//! function: greedy argmax and beam search with length-normalized scoring.
//!
//! The logits function receives the full running sequence (control prompt
//! plus everything generated so far) and returns one unnormalized logit per
//! vocabulary id. Decoding stops when the end-of-sequence token wins or the
//! generation budget runs out; the budget case is flagged as truncated.

use serde::{Deserialize, Serialize};

use crate::model::vocab::EOS;

use super::InferenceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecodeStrategy {
    Greedy,
    Beam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub strategy: DecodeStrategy,
    /// Hypotheses kept per step in beam mode; a beam of one is exactly
    /// greedy decoding.
    pub beam_size: usize,
    /// Generation budget in decode steps (the end-of-sequence emission
    /// counts as a step).
    pub max_len: usize,
    /// Exponent on the step count when comparing completed hypotheses: a
    /// completed hypothesis scores log_prob / steps^length_penalty, so 1
    /// compares average per-step log-probabilities and 0 compares raw sums.
    pub length_penalty: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            strategy: DecodeStrategy::Greedy,
            beam_size: 5,
            max_len: 24,
            length_penalty: 1.0,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<(), InferenceError> {
        if self.beam_size == 0 {
            return Err(InferenceError::InvalidConfig("beam_size must be at least 1".into()));
        }
        if self.max_len == 0 {
            return Err(InferenceError::InvalidConfig("max_len must be at least 1".into()));
        }
        if !self.length_penalty.is_finite() || self.length_penalty < 0.0 {
            return Err(InferenceError::InvalidConfig(
                "length_penalty must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// One decoded hypothesis: generated tokens (prompt and end-of-sequence
/// excluded), the total log-probability of the emission steps (including
/// the end-of-sequence step when one happened), and whether generation hit
/// the budget instead of ending cleanly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedSequence {
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub truncated: bool,
}

impl DecodedSequence {
    /// Steps actually spent emitting this hypothesis.
    pub fn steps(&self) -> usize {
        self.tokens.len() + usize::from(!self.truncated)
    }

    pub fn normalized_score(&self, length_penalty: f64) -> f64 {
        normalized(self.log_prob, self.steps(), length_penalty)
    }
}

fn normalized(log_prob: f64, steps: usize, length_penalty: f64) -> f64 {
    log_prob / (steps.max(1) as f64).powf(length_penalty)
}

/// Numerically stable log-softmax of one logits row.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|&v| v - lse).collect()
}

/// Decodes one sequence. `controls` is the prompt fed to the model before
/// the first generated token; ties at any step resolve toward the lowest
/// token id, making the result a pure function of the logits.
pub fn decode_sequence(
    logits_fn: &mut dyn FnMut(&[usize]) -> Vec<f64>,
    controls: &[usize],
    cfg: &DecodeConfig,
) -> DecodedSequence {
    debug_assert!(cfg.validate().is_ok());
    let width = match cfg.strategy {
        DecodeStrategy::Greedy => 1,
        DecodeStrategy::Beam => cfg.beam_size.max(1),
    };
    beam_search(logits_fn, controls, width, cfg.max_len.max(1), cfg.length_penalty)
}

#[derive(Debug, Clone)]
struct Hypothesis {
    tokens: Vec<usize>,
    log_prob: f64,
}

fn beam_search(
    logits_fn: &mut dyn FnMut(&[usize]) -> Vec<f64>,
    controls: &[usize],
    width: usize,
    max_len: usize,
    length_penalty: f64,
) -> DecodedSequence {
    let mut active = vec![Hypothesis { tokens: Vec::new(), log_prob: 0.0 }];
    let mut completed: Vec<DecodedSequence> = Vec::new();
    for _ in 0..max_len {
        let mut candidates: Vec<Hypothesis> = Vec::new();
        for hyp in &active {
            let mut seq = Vec::with_capacity(controls.len() + hyp.tokens.len());
            seq.extend_from_slice(controls);
            seq.extend_from_slice(&hyp.tokens);
            let row = log_softmax(&logits_fn(&seq));
            for (token, &lp) in row.iter().enumerate() {
                let mut tokens = hyp.tokens.clone();
                tokens.push(token);
                candidates.push(Hypothesis { tokens, log_prob: hyp.log_prob + lp });
            }
        }
        // Highest cumulative log-probability first; equal scores fall back
        // to the lexicographically smallest token sequence so decoding is
        // deterministic even on tied logits.
        candidates.sort_by(|a, b| {
            b.log_prob
                .partial_cmp(&a.log_prob)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.tokens.cmp(&b.tokens))
        });
        candidates.truncate(width);
        active.clear();
        for mut cand in candidates {
            if cand.tokens.last() == Some(&EOS) {
                cand.tokens.pop();
                completed.push(DecodedSequence {
                    tokens: cand.tokens,
                    log_prob: cand.log_prob,
                    truncated: false,
                });
            } else {
                active.push(cand);
            }
        }
        if active.is_empty() {
            break;
        }
    }
    // A cleanly completed hypothesis always beats a truncated one; among
    // completed hypotheses the length-normalized score decides.
    let best_of = |seqs: Vec<DecodedSequence>| {
        seqs.into_iter().min_by(|a, b| {
            b.normalized_score(length_penalty)
                .partial_cmp(&a.normalized_score(length_penalty))
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.tokens.cmp(&b.tokens))
        })
    };
    if let Some(best) = best_of(completed) {
        return best;
    }
    let survivors = active
        .into_iter()
        .map(|h| DecodedSequence { tokens: h.tokens, log_prob: h.log_prob, truncated: true })
        .collect();
    best_of(survivors).expect("at least one hypothesis survives an empty completed pool")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::sha256_hex;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Deterministic pseudo-random logits: each prefix hashes to its own
    /// generator, so the function is pure without any lookup table.
    fn hashed_logits(seed: u64, vocab: usize) -> impl FnMut(&[usize]) -> Vec<f64> {
        move |seq: &[usize]| {
            let mut bytes = seed.to_le_bytes().to_vec();
            for &t in seq {
                bytes.extend_from_slice(&t.to_le_bytes());
            }
            let digest = sha256_hex(&bytes);
            let word = u64::from_str_radix(&digest[..16], 16).expect("hex digest");
            let mut rng = ChaCha8Rng::seed_from_u64(word);
            (0..vocab).map(|_| rng.gen_range(-3.0..3.0)).collect()
        }
    }

    /// Hand-set distribution on a three-token vocabulary ({0, 1, eos})
    /// where the best first step greedily is the worse path overall: token
    /// 0 leads straight to the end while token 1 opens a high-probability
    /// continuation with a better average log-probability.
    fn garden_path(seq: &[usize]) -> Vec<f64> {
        let probs: [f64; 3] = match seq {
            [] => [0.5, 0.45, 0.05],
            [0] => [0.05, 0.05, 0.9],
            [1] => [0.9, 0.05, 0.05],
            [1, 0] => [0.05, 0.05, 0.9],
            _ => [0.1, 0.1, 0.8],
        };
        probs.iter().map(|p| p.ln()).collect()
    }

    fn greedy_cfg(max_len: usize) -> DecodeConfig {
        DecodeConfig { strategy: DecodeStrategy::Greedy, max_len, ..DecodeConfig::default() }
    }

    fn beam_cfg(beam_size: usize, max_len: usize) -> DecodeConfig {
        DecodeConfig {
            strategy: DecodeStrategy::Beam,
            beam_size,
            max_len,
            ..DecodeConfig::default()
        }
    }

    /// Every possible completed hypothesis within the budget: token strings
    /// over the non-eos vocabulary whose end-of-sequence step still fits.
    fn enumerate_completed(
        logits_fn: &mut dyn FnMut(&[usize]) -> Vec<f64>,
        controls: &[usize],
        vocab: usize,
        max_len: usize,
    ) -> Vec<DecodedSequence> {
        let letters: Vec<usize> = (0..vocab).filter(|&t| t != EOS).collect();
        let mut all = Vec::new();
        let mut stack: Vec<Vec<usize>> = vec![Vec::new()];
        while let Some(tokens) = stack.pop() {
            let mut log_prob = 0.0;
            let mut seq = controls.to_vec();
            for &t in &tokens {
                log_prob += log_softmax(&logits_fn(&seq))[t];
                seq.push(t);
            }
            log_prob += log_softmax(&logits_fn(&seq))[EOS];
            all.push(DecodedSequence { tokens: tokens.clone(), log_prob, truncated: false });
            if tokens.len() + 1 < max_len {
                for &t in &letters {
                    let mut next = tokens.clone();
                    next.push(t);
                    stack.push(next);
                }
            }
        }
        all
    }

    fn best_by_score(seqs: Vec<DecodedSequence>, penalty: f64) -> DecodedSequence {
        seqs.into_iter()
            .min_by(|a, b| {
                b.normalized_score(penalty)
                    .partial_cmp(&a.normalized_score(penalty))
                    .unwrap()
                    .then_with(|| a.tokens.cmp(&b.tokens))
            })
            .unwrap()
    }

    #[test]
    fn a_beam_of_one_is_exactly_greedy() {
        for seed in 0..40 {
            let mut f = hashed_logits(seed, 5);
            let greedy = decode_sequence(&mut f, &[9], &greedy_cfg(6));
            let beam = decode_sequence(&mut f, &[9], &beam_cfg(1, 6));
            assert_eq!(greedy, beam, "seed {seed}");
        }
    }

    #[test]
    fn beam_two_finds_the_enumerated_optimum_on_the_garden_path() {
        let beam = decode_sequence(&mut garden_path, &[], &beam_cfg(2, 4));
        let all = enumerate_completed(&mut garden_path, &[], 3, 4);
        assert_eq!(all.len(), 15, "1 + 2 + 4 + 8 hypotheses of length 0..=3");
        let best = best_by_score(all, 1.0);
        assert_eq!(beam, best);
        assert_eq!(beam.tokens, vec![1, 0]);
        // Greedy takes the locally likelier first token and ends up worse.
        let greedy = decode_sequence(&mut garden_path, &[], &greedy_cfg(4));
        assert_eq!(greedy.tokens, vec![0]);
        assert!(greedy.normalized_score(1.0) < beam.normalized_score(1.0));
    }

    #[test]
    fn a_wide_beam_matches_exhaustive_enumeration() {
        // With the beam at least as wide as the number of reachable
        // hypotheses nothing is ever pruned, so the search is exhaustive.
        for seed in 0..25 {
            let mut f = hashed_logits(seed, 3);
            let beam = decode_sequence(&mut f, &[4], &beam_cfg(64, 4));
            let best = best_by_score(enumerate_completed(&mut f, &[4], 3, 4), 1.0);
            assert_eq!(beam, best, "seed {seed}");
        }
    }

    #[test]
    fn the_generation_budget_truncates_and_flags() {
        // The end-of-sequence token never wins.
        let mut stubborn = |_seq: &[usize]| vec![0.0, 5.0, -50.0];
        let out = decode_sequence(&mut stubborn, &[], &greedy_cfg(3));
        assert_eq!(out.tokens, vec![1, 1, 1]);
        assert!(out.truncated);
        assert_eq!(out.steps(), 3);
        let beam = decode_sequence(&mut stubborn, &[], &beam_cfg(2, 3));
        assert_eq!(beam.tokens, vec![1, 1, 1]);
        assert!(beam.truncated);
    }

    #[test]
    fn reported_log_probs_replay_exactly() {
        for seed in 0..20 {
            let mut f = hashed_logits(seed, 4);
            for cfg in [greedy_cfg(5), beam_cfg(3, 5)] {
                let out = decode_sequence(&mut f, &[7, 3], &cfg);
                let mut seq = vec![7, 3];
                let mut replayed = 0.0;
                for &t in &out.tokens {
                    replayed += log_softmax(&f(&seq))[t];
                    seq.push(t);
                }
                if !out.truncated {
                    replayed += log_softmax(&f(&seq))[EOS];
                }
                assert_eq!(out.log_prob.to_bits(), replayed.to_bits(), "seed {seed}");
            }
        }
    }

    #[test]
    fn ties_resolve_toward_the_lowest_token_id() {
        let mut flat = |_seq: &[usize]| vec![1.0; 4];
        let out = decode_sequence(&mut flat, &[], &greedy_cfg(5));
        // Token 0 wins every tied step until the budget runs out; the
        // end-of-sequence token (id 2) never gets picked over id 0.
        assert_eq!(out.tokens, vec![0; 5]);
        assert!(out.truncated);
    }

    #[test]
    fn zero_width_and_zero_budget_configs_are_rejected() {
        assert!(beam_cfg(0, 4).validate().is_err());
        assert!(greedy_cfg(0).validate().is_err());
        assert!(DecodeConfig { length_penalty: -1.0, ..DecodeConfig::default() }
            .validate()
            .is_err());
        assert!(DecodeConfig::default().validate().is_ok());
    }

    #[test]
    fn completed_hypotheses_beat_truncated_survivors() {
        // One path ends immediately with a poor score; the other never
        // ends. The completed one must be returned despite the better
        // normalized score of the survivor.
        let mut f = |seq: &[usize]| match seq {
            [] => vec![(0.6f64).ln(), (0.1f64).ln(), (0.3f64).ln()],
            _ => vec![(0.98f64).ln(), (0.01f64).ln(), (0.01f64).ln()],
        };
        let out = decode_sequence(&mut f, &[], &beam_cfg(2, 4));
        assert!(!out.truncated);
        assert!(out.tokens.is_empty());
    }
}
