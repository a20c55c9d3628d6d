//! Experiment orchestration: generate or load a corpus, train every
//! requested architecture with and without code-switched fine-tuning across
//! seeds, decode the test splits under each routing mode, and reduce the
//! persisted per-utterance outputs into significance-annotated report
//! tables.
//!
//! Everything on disk is deterministic: the same configuration produces the
//! same bytes, file by file. All randomness flows from the configured seeds
//! through labeled sub-seeds, so any one stage (corpus, one training cell,
//! one bootstrap test) can be reproduced in isolation.

pub mod analysis;
pub mod config;
pub mod layout;
pub mod lid_compare;
pub mod matrix;
pub mod report;

pub use analysis::{
    analyze_cell, histogram, read_analysis, write_analysis, CellAnalysis, Histogram,
    ANALYSIS_HEADER,
};
pub use config::{
    Condition, CorpusSource, DimsSpec, ExperimentConfig, EXPERIMENT_HEADER,
};
pub use layout::{lid_mode_label, RunLayout};
pub use lid_compare::{compare_lid_modes, LidCell, LidCompareTable};
pub use matrix::{
    evaluate_cells, finetune_cells, prepare_run, run_matrix, train_base_cells, train_lid_cells,
    write_reports, CellOutcome, MatrixOutcome, PreparedData,
};
pub use report::{build_report, table_mode, ReportCell, ReportColumn, ReportRow, ReportTable, TestSplit, REPORT_HEADER};

use crate::corpus::CorpusError;
use crate::inference::InferenceError;
use crate::metrics::MetricError;
use crate::model::ModelError;
use crate::training::TrainingError;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("missing required key `{0}`")]
    MissingKey(&'static str),
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error("missing file header `{0}`")]
    MissingHeader(&'static str),
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("cell {cell}: {source}")]
    Cell {
        cell: String,
        #[source]
        source: Box<ExperimentError>,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Training(#[from] TrainingError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

pub(crate) fn io_err(path: &std::path::Path, source: std::io::Error) -> ExperimentError {
    ExperimentError::Io { path: path.display().to_string(), source }
}

/// Tags an error with the matrix cell it came from, so a failing run names
/// the architecture, condition and seed that broke.
pub(crate) fn in_cell<T>(
    cell: &str,
    result: Result<T, ExperimentError>,
) -> Result<T, ExperimentError> {
    result.map_err(|e| ExperimentError::Cell { cell: cell.to_string(), source: Box::new(e) })
}
