//! Running built systems on utterances: language-identification routing,
//! greedy and beam decoding, the cascade text hand-off, and the on-disk
//! output record format.

use crate::model::dims::ArchitectureKind;
use crate::model::ModelError;

pub mod decode;
pub mod records;
pub mod runner;

pub use decode::{decode_sequence, log_softmax, DecodeConfig, DecodeStrategy, DecodedSequence};
pub use records::{read_outputs, write_outputs, OutputRecord, OUTPUTS_HEADER};
pub use runner::{
    cascade_translate, decode_transcript_sequence, e2e_translate, run_system, LidMode,
    SequenceScores, SystemOutput,
};

#[derive(Debug, thiserror::Error)]
pub enum InferenceError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("architecture {0} routes by language identification but no classifier was provided")]
    MissingLidModel(ArchitectureKind),
    #[error("invalid decode configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("missing or wrong header line; expected {0:?}")]
    MissingHeader(&'static str),
    #[error("bad output record at line {line}: {message}")]
    Record { line: usize, message: String },
    #[error("duplicate output id {0:?}")]
    DuplicateId(String),
}
