//! Synthetic bilingual speech task.
//!
//! Two artificial languages share nothing at the surface: language 1 words
//! are spelled with 'a'..'m', language 2 words with 'n'..'z', and a bijective
//! lexicon links them word for word. Sentences are random word sequences;
//! code-switched sentences replace one contiguous span with its translation,
//! so the switched share of a sentence never exceeds half by construction.
//! "Audio" is synthesised by mapping each character to a fixed embedding,
//! repeating it 1..=3 times (a crude time stretch) and adding Gaussian noise.
//! Everything is a pure function of the config seed, so corpora regenerate
//! byte-identically.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    matrix_language, CorpusError, LanguageTag, TaggedToken, TaggedTranscript, Utterance,
};
use crate::util::sub_seed;

pub const SPLIT_TRAIN_MONO: &str = "train_mono";
pub const SPLIT_TRAIN_CS: &str = "train_cs";
pub const SPLIT_DEV_CS: &str = "dev_cs";
pub const SPLIT_TEST_CS: &str = "test_cs";
pub const SPLIT_TEST_MONO: &str = "test_mono";

pub const ALL_SPLITS: [&str; 5] =
    [SPLIT_TRAIN_MONO, SPLIT_TRAIN_CS, SPLIT_DEV_CS, SPLIT_TEST_CS, SPLIT_TEST_MONO];

const L1_INVENTORY: [char; 13] = ['a', 'b', 'c', 'd', 'e', 'f', 'g', 'h', 'i', 'j', 'k', 'l', 'm'];
const L2_INVENTORY: [char; 13] = ['n', 'o', 'p', 'q', 'r', 's', 't', 'u', 'v', 'w', 'x', 'y', 'z'];

/// Inventory index of a character, shared across both languages (0..26).
pub fn char_index(c: char) -> Option<usize> {
    match c {
        'a'..='m' => Some(c as usize - 'a' as usize),
        'n'..='z' => Some(13 + c as usize - 'n' as usize),
        _ => None,
    }
}

/// Which language's inventory a character belongs to.
pub fn char_lang(c: char) -> Option<LanguageTag> {
    match c {
        'a'..='m' => Some(LanguageTag::L1),
        'n'..='z' => Some(LanguageTag::L2),
        _ => None,
    }
}

/// Language of a whole word, if all of its characters sit in one inventory.
pub fn word_lang(word: &str) -> Option<LanguageTag> {
    let mut lang = None;
    for c in word.chars() {
        let l = char_lang(c)?;
        match lang {
            None => lang = Some(l),
            Some(prev) if prev != l => return None,
            _ => {}
        }
    }
    lang
}

/// Number of utterances requested per split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train_mono: usize,
    pub train_cs: usize,
    pub dev_cs: usize,
    pub test_cs: usize,
    pub test_mono: usize,
}

impl SplitSizes {
    fn get(&self, name: &str) -> usize {
        match name {
            SPLIT_TRAIN_MONO => self.train_mono,
            SPLIT_TRAIN_CS => self.train_cs,
            SPLIT_DEV_CS => self.dev_cs,
            SPLIT_TEST_CS => self.test_cs,
            SPLIT_TEST_MONO => self.test_mono,
            _ => 0,
        }
    }
}

/// Configuration of the synthetic task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyCorpusConfig {
    /// Words per language in the bijective lexicon.
    pub vocab_size_per_lang: usize,
    /// Characters per word. Fixed length keeps the character stream uniquely
    /// segmentable into words.
    pub word_len: usize,
    /// Dimension of the per-character feature embeddings.
    pub phoneme_dim: usize,
    /// Standard deviation of the Gaussian frame noise.
    pub noise_sigma: f64,
    /// Probability that a sentence destined for a code-switched split
    /// actually receives a switched span. Sentences where the coin comes up
    /// tails are dropped from that split.
    pub cs_rate: f64,
    /// Upper bound on the switched share of a sentence; at most 0.5.
    pub max_cs_proportion: f64,
    /// Inclusive range of sentence lengths in words.
    pub sentence_len_range: (usize, usize),
    /// Inclusive range of repeats per character frame (the time stretch).
    pub stretch_range: (usize, usize),
    pub sizes: SplitSizes,
    pub seed: u64,
}

impl Default for ToyCorpusConfig {
    fn default() -> Self {
        ToyCorpusConfig {
            vocab_size_per_lang: 24,
            word_len: 4,
            phoneme_dim: 12,
            noise_sigma: 0.05,
            cs_rate: 1.0,
            max_cs_proportion: 0.5,
            sentence_len_range: (3, 6),
            stretch_range: (1, 3),
            sizes: SplitSizes {
                train_mono: 2000,
                train_cs: 150,
                dev_cs: 100,
                test_cs: 300,
                test_mono: 300,
            },
            seed: 1,
        }
    }
}

impl ToyCorpusConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.max_cs_proportion > 0.5 {
            return Err(CorpusError::InvalidConfig(format!(
                "max_cs_proportion {} exceeds 0.5",
                self.max_cs_proportion
            )));
        }
        if self.max_cs_proportion < 0.0 || !(0.0..=1.0).contains(&self.cs_rate) {
            return Err(CorpusError::InvalidConfig("cs_rate/max_cs_proportion out of range".into()));
        }
        if self.word_len < 2 {
            return Err(CorpusError::InvalidConfig("word_len must be at least 2".into()));
        }
        if self.vocab_size_per_lang < 2 {
            return Err(CorpusError::InvalidConfig("vocab_size_per_lang must be at least 2".into()));
        }
        // 13 first characters, 12 choices for each later position (no
        // adjacent repeats); require generous slack so lexicon sampling
        // terminates quickly.
        let possibilities = 13usize.saturating_mul(12usize.saturating_pow(self.word_len as u32 - 1));
        if self.vocab_size_per_lang > possibilities / 2 {
            return Err(CorpusError::InvalidConfig(format!(
                "vocab_size_per_lang {} too large for word_len {}",
                self.vocab_size_per_lang, self.word_len
            )));
        }
        let (lo, hi) = self.sentence_len_range;
        if lo < 1 || lo > hi {
            return Err(CorpusError::InvalidConfig("bad sentence_len_range".into()));
        }
        let (slo, shi) = self.stretch_range;
        if slo < 1 || slo > shi {
            return Err(CorpusError::InvalidConfig("bad stretch_range".into()));
        }
        if self.phoneme_dim == 0 {
            return Err(CorpusError::InvalidConfig("phoneme_dim must be positive".into()));
        }
        if self.noise_sigma < 0.0 {
            return Err(CorpusError::InvalidConfig("noise_sigma must be non-negative".into()));
        }
        Ok(())
    }
}

/// The bijective word lexicon: `l1_words[i]` translates to `l2_words[i]` and
/// back.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyLexicon {
    pub l1_words: Vec<String>,
    pub l2_words: Vec<String>,
}

impl ToyLexicon {
    pub fn words(&self, lang: LanguageTag) -> &[String] {
        match lang {
            LanguageTag::L1 => &self.l1_words,
            LanguageTag::L2 => &self.l2_words,
        }
    }

    /// Translates a word into `target`. Words already in the target language
    /// pass through unchanged. Unknown words yield None.
    pub fn translate(&self, surface: &str, target: LanguageTag) -> Option<String> {
        let lang = word_lang(surface)?;
        if lang == target {
            if self.words(lang).iter().any(|w| w == surface) {
                return Some(surface.to_string());
            }
            return None;
        }
        let idx = self.words(lang).iter().position(|w| w == surface)?;
        Some(self.words(target)[idx].clone())
    }
}

fn gen_word<R: Rng>(rng: &mut R, inventory: &[char], len: usize) -> String {
    let mut word = String::with_capacity(len);
    let mut prev: Option<char> = None;
    for _ in 0..len {
        loop {
            let c = inventory[rng.gen_range(0..inventory.len())];
            if Some(c) != prev {
                word.push(c);
                prev = Some(c);
                break;
            }
        }
    }
    word
}

fn gen_lexicon(cfg: &ToyCorpusConfig) -> ToyLexicon {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, "lexicon"));
    let gen_side = |inventory: &[char], rng: &mut ChaCha8Rng| {
        let mut seen = BTreeSet::new();
        let mut words = Vec::with_capacity(cfg.vocab_size_per_lang);
        while words.len() < cfg.vocab_size_per_lang {
            let w = gen_word(rng, inventory, cfg.word_len);
            if seen.insert(w.clone()) {
                words.push(w);
            }
        }
        words
    };
    let l1_words = gen_side(&L1_INVENTORY, &mut rng);
    let l2_words = gen_side(&L2_INVENTORY, &mut rng);
    ToyLexicon { l1_words, l2_words }
}

/// A generated corpus: the config and lexicon that produced it plus the five
/// named splits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyCorpus {
    pub cfg: ToyCorpusConfig,
    pub lexicon: ToyLexicon,
    pub splits: BTreeMap<String, Vec<Utterance>>,
}

impl ToyCorpus {
    pub fn split(&self, name: &str) -> &[Utterance] {
        self.splits.get(name).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Regenerates the feature frames of one utterance.
    pub fn features_for(&self, utt: &Utterance) -> Result<Array2<f64>, CorpusError> {
        let seed = utt.feature_seed.unwrap_or(0);
        synthesize_features(&utt.transcript, &self.cfg, seed)
    }
}

/// Per-seed deterministic corpus generation. Monolingual splits receive
/// exactly their requested size; code-switched splits keep only the
/// sentences whose switch coin (probability `cs_rate`) came up, so with
/// `cs_rate = 0` they are empty.
pub fn generate_toy_corpus(cfg: &ToyCorpusConfig) -> Result<ToyCorpus, CorpusError> {
    cfg.validate()?;
    let lexicon = gen_lexicon(cfg);
    let mut splits = BTreeMap::new();
    for name in ALL_SPLITS {
        let size = cfg.sizes.get(name);
        let cs_split = name.ends_with("_cs");
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, &format!("split:{name}")));
        let mut utts = Vec::with_capacity(size);
        for i in 0..size {
            let id = format!("{name}-{i:06}");
            let gen_matrix =
                if rng.gen_bool(0.5) { LanguageTag::L1 } else { LanguageTag::L2 };
            let n = rng.gen_range(cfg.sentence_len_range.0..=cfg.sentence_len_range.1);
            let words = lexicon.words(gen_matrix);
            let mut tokens: Vec<TaggedToken> = (0..n)
                .map(|_| TaggedToken {
                    surface: words[rng.gen_range(0..words.len())].clone(),
                    lang: gen_matrix,
                })
                .collect();

            if cs_split {
                if !rng.gen_bool(cfg.cs_rate) {
                    continue;
                }
                let max_span = (cfg.max_cs_proportion * n as f64).floor() as usize;
                if max_span == 0 {
                    continue;
                }
                let span = rng.gen_range(1..=max_span);
                let start = rng.gen_range(0..=n - span);
                let embedded = gen_matrix.other();
                for tok in tokens.iter_mut().skip(start).take(span) {
                    tok.surface = lexicon.translate(&tok.surface, embedded).expect("lexicon word");
                    tok.lang = embedded;
                }
            }

            let transcript = TaggedTranscript::new(tokens);
            let tie_seed = sub_seed(cfg.seed, &format!("tie:{id}"));
            let matrix_lang = matrix_language(&transcript, tie_seed)?;
            // The translation renders the whole sentence in the language the
            // switched span came from, mirroring how embedded words appear
            // verbatim in a monolingual translation.
            let target = gen_matrix.other();
            let translation: Vec<String> = transcript
                .tokens
                .iter()
                .map(|t| lexicon.translate(&t.surface, target).expect("lexicon word"))
                .collect();
            let feature_seed = sub_seed(cfg.seed, &format!("features:{id}"));
            let frames = synthesize_features(&transcript, cfg, feature_seed)?;
            utts.push(Utterance {
                id,
                transcript,
                translation: translation.join(" "),
                matrix_lang,
                feature_seed: Some(feature_seed),
                frames_ref: None,
                num_frames: Some(frames.nrows()),
            });
        }
        splits.insert(name.to_string(), utts);
    }
    Ok(ToyCorpus { cfg: cfg.clone(), lexicon, splits })
}

/// Box-Muller standard normal draw; keeps the crate free of a distribution
/// dependency and the stream fully under our control.
fn gauss<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u1: f64 = rng.gen::<f64>();
        let u2: f64 = rng.gen::<f64>();
        if u1 > f64::MIN_POSITIVE {
            return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        }
    }
}

/// The fixed per-character embedding table, a function of the corpus seed
/// only.
pub fn char_embedding_table(cfg: &ToyCorpusConfig) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, "char-embeddings"));
    let mut table = Array2::zeros((26, cfg.phoneme_dim));
    for mut row in table.rows_mut() {
        for v in row.iter_mut() {
            *v = gauss(&mut rng);
        }
    }
    table
}

/// Synthesises feature frames for a transcript: per character, its fixed
/// embedding repeated `stretch_range` times plus Gaussian noise. The frame
/// count therefore lies in [chars, 3 * chars] with the default stretch of
/// 1..=3. Fully deterministic in (transcript, cfg, seed); characters outside
/// the inventories are an error.
pub fn synthesize_features(
    t: &TaggedTranscript,
    cfg: &ToyCorpusConfig,
    seed: u64,
) -> Result<Array2<f64>, CorpusError> {
    if t.is_empty() {
        return Err(CorpusError::EmptyTranscript);
    }
    let table = char_embedding_table(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames: Vec<f64> = Vec::new();
    let mut count = 0usize;
    for token in &t.tokens {
        for c in token.surface.chars() {
            let idx = char_index(c).ok_or(CorpusError::UnknownChar(c))?;
            let stretch = rng.gen_range(cfg.stretch_range.0..=cfg.stretch_range.1);
            for _ in 0..stretch {
                for d in 0..cfg.phoneme_dim {
                    frames.push(table[[idx, d]] + cfg.noise_sigma * gauss(&mut rng));
                }
                count += 1;
            }
        }
    }
    Ok(Array2::from_shape_vec((count, cfg.phoneme_dim), frames).expect("consistent shape"))
}
