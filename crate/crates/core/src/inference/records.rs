//! On-disk system outputs: one JSON record per utterance under a
//! `#cs-outputs v1` header, in the same line-delimited style as the corpus
//! files. Readers refuse files without the header and duplicate ids.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::LanguageTag;

use super::runner::SystemOutput;
use super::InferenceError;

pub const OUTPUTS_HEADER: &str = "#cs-outputs v1";

fn io_err(path: &Path, source: std::io::Error) -> InferenceError {
    InferenceError::Io { path: path.display().to_string(), source }
}

/// One utterance's decoded results, keyed by the utterance id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub id: String,
    pub transcript: String,
    pub translation: String,
    pub lid_used: LanguageTag,
    pub transcript_log_prob: f64,
    pub translation_log_prob: f64,
}

impl OutputRecord {
    pub fn new(id: &str, out: &SystemOutput) -> OutputRecord {
        OutputRecord {
            id: id.to_string(),
            transcript: out.transcript.clone(),
            translation: out.translation.clone(),
            lid_used: out.lid_used,
            transcript_log_prob: out.scores.transcript,
            translation_log_prob: out.scores.translation,
        }
    }
}

pub fn write_outputs(path: &Path, records: &[OutputRecord]) -> Result<(), InferenceError> {
    let mut out = Vec::new();
    writeln!(out, "{OUTPUTS_HEADER}").expect("vec write");
    for rec in records {
        let line = serde_json::to_string(rec)
            .map_err(|e| InferenceError::Record { line: 0, message: e.to_string() })?;
        writeln!(out, "{line}").expect("vec write");
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn read_outputs(path: &Path) -> Result<Vec<OutputRecord>, InferenceError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| io_err(path, e))?
        .ok_or(InferenceError::MissingHeader(OUTPUTS_HEADER))?;
    if header.trim() != OUTPUTS_HEADER {
        return Err(InferenceError::MissingHeader(OUTPUTS_HEADER));
    }
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, line) in lines.enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: OutputRecord = serde_json::from_str(&line)
            .map_err(|e| InferenceError::Record { line: idx + 2, message: e.to_string() })?;
        if !seen.insert(rec.id.clone()) {
            return Err(InferenceError::DuplicateId(rec.id));
        }
        records.push(rec);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<OutputRecord> {
        vec![
            OutputRecord {
                id: "utt-0001".into(),
                transcript: "toma el fall break".into(),
                translation: "take the fall break".into(),
                lid_used: LanguageTag::L1,
                transcript_log_prob: -3.25,
                translation_log_prob: -4.5,
            },
            OutputRecord {
                id: "utt-0002".into(),
                transcript: "".into(),
                translation: "".into(),
                lid_used: LanguageTag::L2,
                transcript_log_prob: -0.125,
                translation_log_prob: 0.0,
            },
        ]
    }

    #[test]
    fn outputs_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("outputs.jsonl");
        let records = sample();
        write_outputs(&path, &records).unwrap();
        assert_eq!(read_outputs(&path).unwrap(), records);
    }

    #[test]
    fn the_header_is_required() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bare.jsonl");
        std::fs::write(&path, "{\"id\":\"x\"}\n").unwrap();
        assert!(matches!(read_outputs(&path), Err(InferenceError::MissingHeader(_))));
        std::fs::write(&path, "").unwrap();
        assert!(matches!(read_outputs(&path), Err(InferenceError::MissingHeader(_))));
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dup.jsonl");
        let mut records = sample();
        records[1].id = records[0].id.clone();
        write_outputs(&path, &records).unwrap();
        assert!(matches!(read_outputs(&path), Err(InferenceError::DuplicateId(_))));
    }
}
