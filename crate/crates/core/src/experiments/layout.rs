//! Where one experiment run keeps its artifacts:
//!
//! ```text
//! <root>/config.txt                         resolved configuration
//! <root>/corpus/                            generated corpus (when not loaded)
//! <root>/ckpt/<arch>/<condition>/<seed>/    best.ckpt + trace.log
//! <root>/ckpt/lid/<condition>/<seed>/       classifier best.ckpt + trace.log
//! <root>/outputs/<arch>.<condition>.<seed>.<split>.<mode>.jsonl
//! <root>/outputs/<arch>.<condition>.<seed>.analysis.json
//! <root>/reports/                           report + comparison tables, corpus stats
//! ```
//!
//! The base system is always trained without code-switched data, so its
//! checkpoint lives under the `no-ft` condition directory even when only the
//! fine-tuned condition is evaluated. The `lid` directory cannot collide
//! with an architecture: every architecture name starts with `cascade-` or
//! `e2e-`. The `<mode>` segment is `none` for architectures that do not
//! route through the classifier, otherwise `oracle` or `predicted`.

use std::path::{Path, PathBuf};

use crate::inference::LidMode;
use crate::model::dims::ArchitectureKind;

use super::config::Condition;

pub const CONFIG_FILE: &str = "config.txt";

/// File-name segment for a routing mode.
pub fn lid_mode_label(mode: Option<LidMode>) -> &'static str {
    match mode {
        None => "none",
        Some(LidMode::Oracle) => "oracle",
        Some(LidMode::Predicted) => "predicted",
    }
}

#[derive(Debug, Clone)]
pub struct RunLayout {
    root: PathBuf,
}

impl RunLayout {
    pub fn new(root: &Path) -> RunLayout {
        RunLayout { root: root.to_path_buf() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config_file(&self) -> PathBuf {
        self.root.join(CONFIG_FILE)
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.root.join("corpus")
    }

    pub fn system_dir(&self, arch: ArchitectureKind, condition: Condition, seed: u64) -> PathBuf {
        self.root
            .join("ckpt")
            .join(arch.as_str())
            .join(condition.as_str())
            .join(seed.to_string())
    }

    pub fn system_ckpt(&self, arch: ArchitectureKind, condition: Condition, seed: u64) -> PathBuf {
        self.system_dir(arch, condition, seed).join("best.ckpt")
    }

    pub fn system_trace(&self, arch: ArchitectureKind, condition: Condition, seed: u64) -> PathBuf {
        self.system_dir(arch, condition, seed).join("trace.log")
    }

    pub fn lid_dir(&self, condition: Condition, seed: u64) -> PathBuf {
        self.root.join("ckpt").join("lid").join(condition.as_str()).join(seed.to_string())
    }

    pub fn lid_ckpt(&self, condition: Condition, seed: u64) -> PathBuf {
        self.lid_dir(condition, seed).join("best.ckpt")
    }

    pub fn lid_trace(&self, condition: Condition, seed: u64) -> PathBuf {
        self.lid_dir(condition, seed).join("trace.log")
    }

    pub fn outputs_dir(&self) -> PathBuf {
        self.root.join("outputs")
    }

    pub fn outputs_file(
        &self,
        arch: ArchitectureKind,
        condition: Condition,
        seed: u64,
        split: &str,
        mode: Option<LidMode>,
    ) -> PathBuf {
        self.outputs_dir().join(format!(
            "{}.{}.{}.{}.{}.jsonl",
            arch.as_str(),
            condition.as_str(),
            seed,
            split,
            lid_mode_label(mode)
        ))
    }

    pub fn analysis_file(
        &self,
        arch: ArchitectureKind,
        condition: Condition,
        seed: u64,
    ) -> PathBuf {
        self.outputs_dir()
            .join(format!("{}.{}.{}.analysis.json", arch.as_str(), condition.as_str(), seed))
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn report_text(&self) -> PathBuf {
        self.reports_dir().join("report.txt")
    }

    pub fn report_tsv(&self) -> PathBuf {
        self.reports_dir().join("report.tsv")
    }

    pub fn lid_compare_text(&self) -> PathBuf {
        self.reports_dir().join("lid_compare.txt")
    }

    pub fn lid_compare_tsv(&self) -> PathBuf {
        self.reports_dir().join("lid_compare.tsv")
    }

    pub fn corpus_stats(&self) -> PathBuf {
        self.reports_dir().join("corpus_stats.txt")
    }
}
