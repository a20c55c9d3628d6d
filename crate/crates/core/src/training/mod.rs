//! Optimization: learning-rate schedule with a freeze window, seeded
//! length-bucketed batching, Adam, checkpointing, metric traces, and the
//! training loops (base runs, code-switch fine-tuning, the language
//! identifier, and the warm-vs-cold initialization comparison).

pub mod batching;
pub mod checkpoint;
pub mod optimizer;
pub mod schedule;
pub mod trace;
pub mod trainer;

pub use batching::assemble_batches;
pub use checkpoint::{Checkpoint, CheckpointKind, Moments, RngState, CHECKPOINT_MAGIC};
pub use optimizer::{Adam, AdamConfig};
pub use schedule::{
    freeze_mask, is_exempt, lr_at, FreezePlan, TriStageSchedule, EXEMPT_GROUPS,
};
pub use trace::{read_trace, TraceRecord, TraceWriter, TRACE_HEADER};
pub use trainer::{
    finetune, lid_accuracy, lid_epoch_mixture, most_frequent_token_accuracy, train, train_lid,
    transcript_token_accuracy, warmstart_ablation, EarlyStopper, SelectionMetric, StopDecision,
    TrainOutcome, TrainPlan, WarmstartOutcome,
};

use crate::metrics::MetricError;
use crate::model::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum TrainingError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("invalid training plan: {0}")]
    InvalidPlan(String),
    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),
    #[error("language-identification data covers only one language")]
    SingleClassLid,
    #[error("training diverged at step {step}: loss {value}")]
    Diverged { step: u64, value: f64 },
    #[error("checkpoint kind mismatch: expected {expected}, found {found}")]
    KindMismatch { expected: String, found: String },
    #[error("checkpoint names a tensor the architecture does not have: {0}")]
    UnknownTensor(String),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("io error at {path}")]
    Io { path: String, source: std::io::Error },
    #[error("missing or wrong header line, expected {0}")]
    MissingHeader(&'static str),
    #[error("bad record at line {line}: {message}")]
    Record { line: usize, message: String },
}
