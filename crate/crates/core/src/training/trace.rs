//! Append-only metric trace: one JSON record per evaluation under a
//! `#cs-trace v1` header. A trace file survives process restarts; opening
//! an existing trace appends after validating the header.

use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::TrainingError;

pub const TRACE_HEADER: &str = "#cs-trace v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: u64,
    pub split: String,
    pub metric: String,
    pub value: f64,
}

impl TraceRecord {
    pub fn new(step: u64, split: &str, metric: &str, value: f64) -> TraceRecord {
        TraceRecord { step, split: split.into(), metric: metric.into(), value }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> TrainingError {
    TrainingError::Io { path: path.display().to_string(), source }
}

/// Appends records to a trace file, writing the header when the file is
/// new or empty.
pub struct TraceWriter {
    path: PathBuf,
    file: std::fs::File,
}

impl TraceWriter {
    pub fn open(path: &Path) -> Result<TraceWriter, TrainingError> {
        let existing = std::fs::metadata(path).map(|m| m.len()).unwrap_or(0);
        if existing > 0 {
            // Appending to a foreign file would corrupt it; check first.
            read_trace(path)?;
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| io_err(path, e))?;
        if existing == 0 {
            writeln!(file, "{TRACE_HEADER}").map_err(|e| io_err(path, e))?;
        }
        Ok(TraceWriter { path: path.to_path_buf(), file })
    }

    pub fn record(&mut self, rec: &TraceRecord) -> Result<(), TrainingError> {
        let line = serde_json::to_string(rec)
            .map_err(|e| TrainingError::Record { line: 0, message: e.to_string() })?;
        writeln!(self.file, "{line}").map_err(|e| io_err(&self.path, e))?;
        self.file.flush().map_err(|e| io_err(&self.path, e))
    }
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>, TrainingError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| io_err(path, e))?
        .ok_or(TrainingError::MissingHeader(TRACE_HEADER))?;
    if header.trim() != TRACE_HEADER {
        return Err(TrainingError::MissingHeader(TRACE_HEADER));
    }
    let mut records = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord = serde_json::from_str(&line)
            .map_err(|e| TrainingError::Record { line: idx + 2, message: e.to_string() })?;
        records.push(rec);
    }
    Ok(records)
}
