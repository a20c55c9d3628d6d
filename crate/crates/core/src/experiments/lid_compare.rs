//! Oracle-versus-predicted routing comparison for the classifier-gated
//! architectures. Each cell shows the predicted-routing score with the
//! delta to the oracle run in parentheses (delta = predicted minus oracle),
//! recomputed from the persisted per-utterance outputs of both modes.
//! Bidirectional architectures have no routing decision and do not appear.

use std::fmt::Write as _;

use crate::corpus::toy::ToyCorpus;
use crate::inference::LidMode;
use crate::model::dims::ArchitectureKind;

use super::config::ExperimentConfig;
use super::layout::RunLayout;
use super::report::{columns_for, seed_stats, ReportColumn};
use super::ExperimentError;

pub const LID_COMPARE_HEADER: &str = "#cs-lid-compare v1";

/// One architecture's scores in one column under both routing modes, in
/// display scale, averaged over seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidCell {
    pub predicted: f64,
    pub oracle: f64,
}

impl LidCell {
    pub fn delta(&self) -> f64 {
        self.predicted - self.oracle
    }
}

#[derive(Debug, Clone)]
pub struct LidCompareTable {
    pub seeds: Vec<u64>,
    pub columns: Vec<ReportColumn>,
    pub rows: Vec<(ArchitectureKind, Vec<LidCell>)>,
}

/// Builds the comparison from a finished run. Both routing modes must have
/// been evaluated; a missing output file is an error naming the file.
pub fn compare_lid_modes(
    cfg: &ExperimentConfig,
    layout: &RunLayout,
    corpus: &ToyCorpus,
) -> Result<LidCompareTable, ExperimentError> {
    if !cfg.lid_modes.contains(&LidMode::Oracle) || !cfg.lid_modes.contains(&LidMode::Predicted) {
        return Err(ExperimentError::Invalid(
            "the routing comparison needs both oracle and predicted in lid_modes".into(),
        ));
    }
    let gated: Vec<ArchitectureKind> =
        cfg.architectures.iter().copied().filter(|a| a.uses_lid()).collect();
    if gated.is_empty() {
        return Err(ExperimentError::Invalid(
            "no classifier-gated architectures in this run".into(),
        ));
    }

    let columns = columns_for(cfg);
    let mut rows = Vec::with_capacity(gated.len());
    for arch in gated {
        let mut cells = Vec::with_capacity(columns.len());
        for col in &columns {
            let refs = corpus.split(col.split.split_name());
            let value = |mode: LidMode| -> Result<f64, ExperimentError> {
                let mut sum = 0.0;
                for &seed in &cfg.seeds {
                    let stats = seed_stats(
                        layout,
                        refs,
                        arch,
                        col.condition,
                        seed,
                        col.split,
                        Some(mode),
                        col.metric,
                    )?;
                    sum += stats.display_value()?;
                }
                Ok(sum / cfg.seeds.len() as f64)
            };
            cells.push(LidCell { predicted: value(LidMode::Predicted)?, oracle: value(LidMode::Oracle)? });
        }
        rows.push((arch, cells));
    }
    Ok(LidCompareTable { seeds: cfg.seeds.clone(), columns, rows })
}

impl LidCompareTable {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{LID_COMPARE_HEADER}");
        let seeds: Vec<String> = self.seeds.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(
            out,
            "Predicted-routing scores over seed(s) {}, with the difference to the\n\
             corresponding oracle-routing run in parentheses (predicted minus\n\
             oracle). WER/CER/CharCut are percentages, lower is better; BLEU is\n\
             higher-better. Only classifier-gated architectures appear.",
            seeds.join(", ")
        );
        let _ = writeln!(out);

        let name_width = self
            .rows
            .iter()
            .map(|(a, _)| a.as_str().len())
            .chain(["architecture".len()])
            .max()
            .unwrap_or(12);
        let headers: Vec<String> = self.columns.iter().map(|c| c.label()).collect();
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|(_, cells)| {
                cells
                    .iter()
                    .map(|c| format!("{:.2} ({:+.2})", c.predicted, c.delta()))
                    .collect::<Vec<_>>()
            })
            .collect();
        let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
        for row in &body {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }

        let _ = write!(out, "{:<name_width$}", "architecture");
        for (h, &w) in headers.iter().zip(&widths) {
            let _ = write!(out, " | {h:>w$}");
        }
        let _ = writeln!(out);
        let _ = write!(out, "{:-<name_width$}", "");
        for &w in &widths {
            let _ = write!(out, "-+-{:-<w$}", "");
        }
        let _ = writeln!(out);
        for ((arch, _), cells) in self.rows.iter().zip(&body) {
            let _ = write!(out, "{:<name_width$}", arch.as_str());
            for (cell, &w) in cells.iter().zip(&widths) {
                let _ = write!(out, " | {cell:>w$}");
            }
            let _ = writeln!(out);
        }
        out
    }

    pub fn render_tsv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{LID_COMPARE_HEADER}");
        let _ = writeln!(out, "arch\tcondition\tsplit\tmetric\tpredicted\toracle\tdelta");
        for (arch, cells) in &self.rows {
            for (col, cell) in self.columns.iter().zip(cells) {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    arch.as_str(),
                    col.condition.as_str(),
                    col.split.split_name(),
                    col.metric.as_str(),
                    cell.predicted,
                    cell.oracle,
                    cell.delta(),
                );
            }
        }
        out
    }
}
