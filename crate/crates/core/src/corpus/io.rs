//! On-disk corpus formats.
//!
//! Utterance records are line-delimited JSON under a `#cs-corpus v1` header
//! line; the same header guards the tab-separated id-to-split mapping and the
//! toy-corpus manifest. Readers refuse files without the expected header so
//! stale or foreign files fail fast instead of parsing half-way.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::toy::{ToyCorpus, ToyCorpusConfig, ToyLexicon};
use super::{CorpusError, Utterance};

pub const CORPUS_HEADER: &str = "#cs-corpus v1";

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io { path: path.display().to_string(), source }
}

/// One line of a corpus record file: an utterance plus the split it belongs
/// to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub split: String,
    #[serde(flatten)]
    pub utterance: Utterance,
}

/// Writes utterance records, one JSON object per line, under the format
/// header.
pub fn write_records(path: &Path, records: &[UtteranceRecord]) -> Result<(), CorpusError> {
    let mut out = Vec::new();
    writeln!(out, "{CORPUS_HEADER}").expect("vec write");
    for rec in records {
        let line = serde_json::to_string(rec)
            .map_err(|e| CorpusError::Record { line: 0, message: e.to_string() })?;
        writeln!(out, "{line}").expect("vec write");
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads utterance records, enforcing the header and rejecting duplicate ids.
pub fn read_records(path: &Path) -> Result<Vec<UtteranceRecord>, CorpusError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| io_err(path, e))?
        .ok_or(CorpusError::MissingHeader(CORPUS_HEADER))?;
    if header.trim() != CORPUS_HEADER {
        return Err(CorpusError::MissingHeader(CORPUS_HEADER));
    }
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, line) in lines.enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: UtteranceRecord = serde_json::from_str(&line)
            .map_err(|e| CorpusError::Record { line: idx + 2, message: e.to_string() })?;
        if !seen.insert(rec.utterance.id.clone()) {
            return Err(CorpusError::DuplicateId(rec.utterance.id));
        }
        records.push(rec);
    }
    Ok(records)
}

/// Writes the id-to-split mapping as `id<TAB>split` lines under the header.
pub fn write_split_mapping(
    path: &Path,
    mapping: &BTreeMap<String, String>,
) -> Result<(), CorpusError> {
    let mut out = Vec::new();
    writeln!(out, "{CORPUS_HEADER}").expect("vec write");
    for (id, split) in mapping {
        writeln!(out, "{id}\t{split}").expect("vec write");
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn read_split_mapping(path: &Path) -> Result<BTreeMap<String, String>, CorpusError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| io_err(path, e))?
        .ok_or(CorpusError::MissingHeader(CORPUS_HEADER))?;
    if header.trim() != CORPUS_HEADER {
        return Err(CorpusError::MissingHeader(CORPUS_HEADER));
    }
    let mut mapping = BTreeMap::new();
    for (idx, line) in lines.enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, split) = line.split_once('\t').ok_or(CorpusError::Record {
            line: idx + 2,
            message: "expected id<TAB>split".to_string(),
        })?;
        if mapping.insert(id.to_string(), split.to_string()).is_some() {
            return Err(CorpusError::DuplicateId(id.to_string()));
        }
    }
    Ok(mapping)
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    cfg: ToyCorpusConfig,
    lexicon: ToyLexicon,
}

/// Persists a toy corpus as a directory: `manifest.json` (config + lexicon),
/// `records.jsonl` (all utterances) and `splits.tsv` (the id mapping).
pub fn write_toy_corpus(dir: &Path, corpus: &ToyCorpus) -> Result<(), CorpusError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let manifest = Manifest { cfg: corpus.cfg.clone(), lexicon: corpus.lexicon.clone() };
    let body = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CorpusError::Record { line: 0, message: e.to_string() })?;
    let manifest_path = dir.join("manifest.json");
    std::fs::write(&manifest_path, format!("{CORPUS_HEADER}\n{body}\n"))
        .map_err(|e| io_err(&manifest_path, e))?;

    let mut records = Vec::new();
    let mut mapping = BTreeMap::new();
    for (split, utts) in &corpus.splits {
        for utt in utts {
            mapping.insert(utt.id.clone(), split.clone());
            records.push(UtteranceRecord { split: split.clone(), utterance: utt.clone() });
        }
    }
    write_records(&dir.join("records.jsonl"), &records)?;
    write_split_mapping(&dir.join("splits.tsv"), &mapping)
}

/// Loads a toy corpus directory written by [`write_toy_corpus`], checking the
/// record and mapping files against each other.
pub fn read_toy_corpus(dir: &Path) -> Result<ToyCorpus, CorpusError> {
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
    let body = text
        .strip_prefix(CORPUS_HEADER)
        .ok_or(CorpusError::MissingHeader(CORPUS_HEADER))?;
    let manifest: Manifest = serde_json::from_str(body)
        .map_err(|e| CorpusError::Record { line: 0, message: e.to_string() })?;

    let records = read_records(&dir.join("records.jsonl"))?;
    let mapping = read_split_mapping(&dir.join("splits.tsv"))?;
    let mut splits: BTreeMap<String, Vec<Utterance>> = BTreeMap::new();
    for rec in records {
        match mapping.get(&rec.utterance.id) {
            Some(split) if *split == rec.split => {}
            _ => {
                return Err(CorpusError::Record {
                    line: 0,
                    message: format!(
                        "record {} disagrees with the split mapping",
                        rec.utterance.id
                    ),
                })
            }
        }
        splits.entry(rec.split).or_default().push(rec.utterance);
    }
    Ok(ToyCorpus { cfg: manifest.cfg, lexicon: manifest.lexicon, splits })
}
