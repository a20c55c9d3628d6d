//! Shared vocabulary with reserved control tokens.
//!
//! One vocabulary serves every component: speech decoders, text encoders and
//! text decoders all index the same id space. The first ids are control
//! tokens; word ids follow, first-language words before second-language
//! words, so a word's language is recoverable from its id range.
//!
//! Decoder sequences follow one convention everywhere: the input starts with
//! a task token and a language token, the target starts with the language
//! token and ends with end-of-sequence. At decode time only the task token is
//! given; the model's first prediction is the language token, which is what
//! lets bidirectional systems pick a language without an external classifier.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{LanguageTag, TaggedTranscript};
use crate::corpus::toy::ToyLexicon;

use super::ModelError;

pub const PAD: usize = 0;
/// Reserved; the current recipes never feed it (prefixes start with a task
/// token instead).
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const TASK_TRANSCRIBE: usize = 3;
pub const TASK_TRANSLATE: usize = 4;
pub const LANG_L1: usize = 5;
pub const LANG_L2: usize = 6;
pub const NUM_CONTROL_TOKENS: usize = 7;

/// What a decoder pass is asked to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Transcribe,
    Translate,
}

impl Task {
    pub fn token(self) -> usize {
        match self {
            Task::Transcribe => TASK_TRANSCRIBE,
            Task::Translate => TASK_TRANSLATE,
        }
    }
}

pub fn lang_token(lang: LanguageTag) -> usize {
    match lang {
        LanguageTag::L1 => LANG_L1,
        LanguageTag::L2 => LANG_L2,
    }
}

pub fn lang_for_token(id: usize) -> Option<LanguageTag> {
    match id {
        LANG_L1 => Some(LanguageTag::L1),
        LANG_L2 => Some(LanguageTag::L2),
        _ => None,
    }
}

/// Teacher-forcing input: [task][lang][words...].
pub fn decoder_input(task: Task, lang: LanguageTag, words: &[usize]) -> Vec<usize> {
    let mut seq = Vec::with_capacity(words.len() + 2);
    seq.push(task.token());
    seq.push(lang_token(lang));
    seq.extend_from_slice(words);
    seq
}

/// Teacher-forcing target: [lang][words...][eos], aligned position-wise with
/// [`decoder_input`].
pub fn decoder_target(lang: LanguageTag, words: &[usize]) -> Vec<usize> {
    let mut seq = Vec::with_capacity(words.len() + 2);
    seq.push(lang_token(lang));
    seq.extend_from_slice(words);
    seq.push(EOS);
    seq
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct VocabSpec {
    l1_words: Vec<String>,
    l2_words: Vec<String>,
}

impl From<Vocab> for VocabSpec {
    fn from(v: Vocab) -> VocabSpec {
        VocabSpec { l1_words: v.l1_words, l2_words: v.l2_words }
    }
}

impl TryFrom<VocabSpec> for Vocab {
    type Error = ModelError;
    fn try_from(s: VocabSpec) -> Result<Vocab, ModelError> {
        Vocab::from_word_lists(&s.l1_words, &s.l2_words)
    }
}

/// The id space: control tokens, then L1 words, then L2 words.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "VocabSpec", into = "VocabSpec")]
pub struct Vocab {
    l1_words: Vec<String>,
    l2_words: Vec<String>,
    by_surface: BTreeMap<String, usize>,
}

impl Vocab {
    pub fn from_word_lists(l1: &[String], l2: &[String]) -> Result<Vocab, ModelError> {
        let mut by_surface = BTreeMap::new();
        for (offset, word) in l1.iter().chain(l2.iter()).enumerate() {
            if by_surface.insert(word.clone(), NUM_CONTROL_TOKENS + offset).is_some() {
                return Err(ModelError::DuplicateWord(word.clone()));
            }
        }
        Ok(Vocab { l1_words: l1.to_vec(), l2_words: l2.to_vec(), by_surface })
    }

    pub fn from_lexicon(lexicon: &ToyLexicon) -> Result<Vocab, ModelError> {
        Vocab::from_word_lists(&lexicon.l1_words, &lexicon.l2_words)
    }

    /// Total id count, control tokens included.
    pub fn len(&self) -> usize {
        NUM_CONTROL_TOKENS + self.l1_words.len() + self.l2_words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_control(&self, id: usize) -> bool {
        id < NUM_CONTROL_TOKENS
    }

    pub fn is_word(&self, id: usize) -> bool {
        id >= NUM_CONTROL_TOKENS && id < self.len()
    }

    pub fn word_id(&self, surface: &str) -> Option<usize> {
        self.by_surface.get(surface).copied()
    }

    /// Surface form of a word id; `None` for control or out-of-range ids.
    pub fn surface(&self, id: usize) -> Option<&str> {
        if !self.is_word(id) {
            return None;
        }
        let offset = id - NUM_CONTROL_TOKENS;
        if offset < self.l1_words.len() {
            Some(&self.l1_words[offset])
        } else {
            Some(&self.l2_words[offset - self.l1_words.len()])
        }
    }

    /// Language of a word id, from its id range.
    pub fn lang_of_word(&self, id: usize) -> Option<LanguageTag> {
        if !self.is_word(id) {
            return None;
        }
        if id - NUM_CONTROL_TOKENS < self.l1_words.len() {
            Some(LanguageTag::L1)
        } else {
            Some(LanguageTag::L2)
        }
    }

    pub fn encode_words<'a, I: IntoIterator<Item = &'a str>>(
        &self,
        words: I,
    ) -> Result<Vec<usize>, ModelError> {
        words
            .into_iter()
            .map(|w| self.word_id(w).ok_or_else(|| ModelError::UnknownWord(w.to_string())))
            .collect()
    }

    pub fn encode_transcript(&self, t: &TaggedTranscript) -> Result<Vec<usize>, ModelError> {
        self.encode_words(t.tokens.iter().map(|tok| tok.surface.as_str()))
    }

    pub fn encode_text(&self, text: &str) -> Result<Vec<usize>, ModelError> {
        self.encode_words(text.split_whitespace())
    }

    /// Renders word ids as text, skipping any control ids.
    pub fn words_to_text(&self, ids: &[usize]) -> String {
        let words: Vec<&str> = ids.iter().filter_map(|&id| self.surface(id)).collect();
        words.join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_vocab() -> Vocab {
        Vocab::from_word_lists(
            &["abab".into(), "acac".into()],
            &["nono".into(), "npnp".into(), "nqnq".into()],
        )
        .unwrap()
    }

    #[test]
    fn control_ids_are_disjoint_from_words() {
        let v = small_vocab();
        assert_eq!(v.len(), 12);
        for id in 0..NUM_CONTROL_TOKENS {
            assert!(v.is_control(id));
            assert!(!v.is_word(id));
            assert_eq!(v.surface(id), None);
        }
        assert_eq!(v.word_id("abab"), Some(7));
        assert_eq!(v.word_id("nono"), Some(9));
        assert_eq!(v.surface(8), Some("acac"));
    }

    #[test]
    fn word_language_follows_id_range() {
        let v = small_vocab();
        assert_eq!(v.lang_of_word(7), Some(LanguageTag::L1));
        assert_eq!(v.lang_of_word(9), Some(LanguageTag::L2));
        assert_eq!(v.lang_of_word(3), None);
    }

    #[test]
    fn duplicate_words_rejected() {
        let err = Vocab::from_word_lists(&["abab".into()], &["abab".into()]);
        assert!(matches!(err, Err(ModelError::DuplicateWord(w)) if w == "abab"));
    }

    #[test]
    fn unknown_word_is_an_error() {
        let v = small_vocab();
        assert!(matches!(
            v.encode_text("abab zzzz"),
            Err(ModelError::UnknownWord(w)) if w == "zzzz"
        ));
    }

    #[test]
    fn input_and_target_are_aligned() {
        use crate::corpus::LanguageTag::L1;
        let words = vec![8usize, 7];
        let input = decoder_input(Task::Transcribe, L1, &words);
        let target = decoder_target(L1, &words);
        assert_eq!(input, vec![TASK_TRANSCRIBE, LANG_L1, 8, 7]);
        assert_eq!(target, vec![LANG_L1, 8, 7, EOS]);
        assert_eq!(input.len(), target.len());
        // Position t of the input predicts position t of the target: the
        // task token predicts the language token, each token predicts its
        // successor, the last word predicts end-of-sequence.
        assert_eq!(&input[2..], &target[1..3]);
    }

    #[test]
    fn round_trips_through_serde() {
        let v = small_vocab();
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocab = serde_json::from_str(&json).unwrap();
        assert_eq!(back.len(), v.len());
        assert_eq!(back.word_id("nqnq"), v.word_id("nqnq"));
    }

    #[test]
    fn text_rendering_skips_controls() {
        let v = small_vocab();
        let ids = vec![TASK_TRANSCRIBE, LANG_L1, 7, 9, EOS];
        assert_eq!(v.words_to_text(&ids), "abab nono");
    }
}
