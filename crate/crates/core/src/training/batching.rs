//! Batch assembly: length-sorted bucketing with a seeded shuffle of the
//! bucket order. Sorting by feature length keeps padding waste down and
//! makes utterances of similar duration train together; shuffling the
//! buckets keeps the step order from being a length curriculum.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::PreparedExample;

use super::TrainingError;

/// Groups example indices into batches: indices are ordered by feature
/// length (ties by position, so the order is total and stable), chunked,
/// and the chunk order is shuffled by the seed.
pub fn assemble_batches(
    examples: &[PreparedExample],
    batch_size: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>, TrainingError> {
    if batch_size == 0 {
        return Err(TrainingError::InvalidPlan("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.sort_by_key(|&i| (examples[i].features.nrows(), i));
    let mut batches: Vec<Vec<usize>> =
        order.chunks(batch_size).map(|chunk| chunk.to_vec()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    batches.shuffle(&mut rng);
    Ok(batches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::toy::{generate_toy_corpus, SplitSizes, ToyCorpusConfig, SPLIT_TRAIN_MONO};
    use crate::model::{prepare_examples, Vocab};

    fn examples() -> Vec<PreparedExample> {
        let cfg = ToyCorpusConfig {
            vocab_size_per_lang: 6,
            phoneme_dim: 4,
            sizes: SplitSizes {
                train_mono: 23,
                train_cs: 2,
                dev_cs: 2,
                test_cs: 2,
                test_mono: 2,
            },
            seed: 4,
            ..ToyCorpusConfig::default()
        };
        let corpus = generate_toy_corpus(&cfg).unwrap();
        let vocab = Vocab::from_lexicon(&corpus.lexicon).unwrap();
        prepare_examples(&corpus, SPLIT_TRAIN_MONO, &vocab).unwrap()
    }

    #[test]
    fn every_example_appears_exactly_once() {
        let exs = examples();
        let batches = assemble_batches(&exs, 4, 7).unwrap();
        let mut seen: Vec<usize> = batches.iter().flatten().copied().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..exs.len()).collect::<Vec<_>>());
        assert!(batches.iter().all(|b| b.len() <= 4));
        assert_eq!(batches.iter().filter(|b| b.len() < 4).count(), usize::from(exs.len() % 4 != 0));
    }

    #[test]
    fn batches_are_contiguous_length_runs() {
        let exs = examples();
        let mut batches = assemble_batches(&exs, 4, 7).unwrap();
        // Undo the shuffle by sorting batches by their length range; the
        // concatenation must then be globally length-sorted.
        batches.sort_by_key(|b| {
            (exs[b[0]].features.nrows(), exs[*b.last().unwrap()].features.nrows())
        });
        let lengths: Vec<usize> =
            batches.iter().flatten().map(|&i| exs[i].features.nrows()).collect();
        let mut sorted = lengths.clone();
        sorted.sort_unstable();
        assert_eq!(lengths, sorted);
    }

    #[test]
    fn the_batch_order_is_seeded() {
        let exs = examples();
        let a = assemble_batches(&exs, 4, 7).unwrap();
        let b = assemble_batches(&exs, 4, 7).unwrap();
        let c = assemble_batches(&exs, 4, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c, "different seeds should reorder the buckets");
    }

    #[test]
    fn degenerate_sizes_are_handled() {
        let exs = examples();
        assert!(assemble_batches(&exs, 0, 1).is_err());
        let one = assemble_batches(&exs, exs.len() + 10, 1).unwrap();
        assert_eq!(one.len(), 1);
        let empty = assemble_batches(&[], 4, 1).unwrap();
        assert!(empty.is_empty());
    }
}
