//! Joint transcription-and-translation systems over a tiny bilingual
//! vocabulary: shared vocabulary with control tokens, transformer layers on
//! the reverse-mode tape, seven system layouts differing only in what they
//! share, and a standalone language-identification model.

pub mod components;
pub mod dims;
pub mod layers;
pub mod system;
pub mod vocab;

use thiserror::Error;

use dims::ArchitectureKind;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model dimensions: {0}")]
    InvalidDims(String),
    #[error("unknown architecture name {0:?}")]
    UnknownArchitecture(String),
    #[error("duplicate word {0:?} in vocabulary")]
    DuplicateWord(String),
    #[error("word {0:?} is not in the vocabulary")]
    UnknownWord(String),
    #[error("token id {0} is out of vocabulary range")]
    UnknownTokenId(usize),
    #[error("operation needs an end-to-end layout, got {0}")]
    RequiresEndToEnd(ArchitectureKind),
    #[error("operation needs a cascade layout, got {0}")]
    RequiresCascade(ArchitectureKind),
    #[error("translation of utterance {0:?} mixes languages")]
    MixedTranslation(String),
    #[error("utterance {0:?} has an empty {1}")]
    EmptySequence(String, &'static str),
    #[error("state width mismatch: expected {expected}, got {got}")]
    StateDimMismatch { expected: usize, got: usize },
    #[error("features for utterance {0:?}: {1}")]
    Features(String, String),
}

pub use components::{Decoder, LidClassifier, SpeechFront, TextEncoder};
pub use dims::ModelDims;
pub use layers::Dropout;
pub use system::{
    index_lang, lang_index, prepare_examples, JointForward, JointWeights, LidModel, MtStack,
    PerLang, PreparedExample, System,
};
pub use vocab::{Task, Vocab};
