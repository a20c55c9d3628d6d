//! The report tables: rows are architectures, columns pair a training
//! condition with a test split and a metric. Every number is recomputed
//! here from the persisted per-utterance output files, never copied from
//! training state, so a finished run directory is self-contained. Bold
//! (rendered `[x]`) marks the best column value; an asterisk marks scores
//! whose paired bootstrap against the best gives p at or above the
//! significance level. Both annotations come straight from the stored
//! [`SignificanceResult`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::corpus::toy::{ToyCorpus, SPLIT_TEST_CS, SPLIT_TEST_MONO};
use crate::corpus::Utterance;
use crate::inference::{read_outputs, InferenceError, LidMode, OutputRecord};
use crate::metrics::{
    bleu_stat, bootstrap_significance, cer_stat, charcut_stat, corpus_bleu, corpus_charcut,
    corpus_rate, wer_stat, BleuStat, CharCutStat, Direction, EditStat, MetricKind,
    SignificanceResult, Verdict,
};
use crate::model::dims::ArchitectureKind;
use crate::util::sub_seed;

use super::config::{Condition, ExperimentConfig};
use super::layout::{lid_mode_label, RunLayout};
use super::ExperimentError;

pub const REPORT_HEADER: &str = "#cs-report v1";

/// The two held-out evaluation sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestSplit {
    Cs,
    Mono,
}

impl TestSplit {
    pub const ALL: [TestSplit; 2] = [TestSplit::Cs, TestSplit::Mono];

    pub fn split_name(self) -> &'static str {
        match self {
            TestSplit::Cs => SPLIT_TEST_CS,
            TestSplit::Mono => SPLIT_TEST_MONO,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TestSplit::Cs => "CS",
            TestSplit::Mono => "Mono",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReportColumn {
    pub condition: Condition,
    pub split: TestSplit,
    pub metric: MetricKind,
}

impl ReportColumn {
    pub fn label(&self) -> String {
        format!("{} {} {}", self.condition.label(), self.split.label(), self.metric.as_str())
    }
}

/// One architecture's score in one column, aggregated over seeds.
#[derive(Debug, Clone)]
pub struct ReportCell {
    /// Corpus-level score per seed, in display scale (percent for error
    /// rates, BLEU as-is).
    pub per_seed: Vec<f64>,
    pub mean: f64,
    /// Standard deviation across seeds; absent for a single seed.
    pub sd: Option<f64>,
    pub best: bool,
    /// Paired bootstrap against the column best over the per-utterance
    /// statistics of all seeds. The best row is tested against itself and
    /// comes out similar by construction.
    pub significance: SignificanceResult,
}

#[derive(Debug, Clone)]
pub struct ReportRow {
    pub arch: ArchitectureKind,
    /// Routing used for this row's outputs in the table.
    pub mode: Option<LidMode>,
    pub cells: Vec<ReportCell>,
}

#[derive(Debug, Clone)]
pub struct ReportTable {
    pub seeds: Vec<u64>,
    pub columns: Vec<ReportColumn>,
    pub rows: Vec<ReportRow>,
}

/// Which routing a row shows in the main table: predicted routing when it
/// was evaluated (the realistic condition), otherwise oracle; bidirectional
/// architectures have no routing.
pub fn table_mode(kind: ArchitectureKind, lid_modes: &[LidMode]) -> Option<LidMode> {
    if !kind.uses_lid() {
        None
    } else if lid_modes.contains(&LidMode::Predicted) {
        Some(LidMode::Predicted)
    } else {
        Some(LidMode::Oracle)
    }
}

fn table_metrics(expanded: bool) -> Vec<MetricKind> {
    if expanded {
        vec![MetricKind::Wer, MetricKind::Cer, MetricKind::Bleu, MetricKind::CharCut]
    } else {
        vec![MetricKind::Wer, MetricKind::Bleu]
    }
}

pub(crate) fn columns_for(cfg: &ExperimentConfig) -> Vec<ReportColumn> {
    let mut columns = Vec::new();
    for condition in cfg.ordered_conditions() {
        for split in TestSplit::ALL {
            for metric in table_metrics(cfg.expanded) {
                columns.push(ReportColumn { condition, split, metric });
            }
        }
    }
    columns
}

/// Per-utterance statistics of one (cell, seed, metric), in a form the
/// corpus-level aggregations and the bootstrap both accept.
#[derive(Debug, Clone)]
pub(crate) enum StatList {
    Edit(Vec<EditStat>),
    Bleu(Vec<BleuStat>),
    Cut(Vec<CharCutStat>),
}

impl StatList {
    fn empty(kind: MetricKind) -> StatList {
        match kind {
            MetricKind::Wer | MetricKind::Cer => StatList::Edit(Vec::new()),
            MetricKind::Bleu => StatList::Bleu(Vec::new()),
            MetricKind::CharCut => StatList::Cut(Vec::new()),
        }
    }

    fn gather(
        kind: MetricKind,
        pairs: &[(OutputRecord, &Utterance)],
    ) -> Result<StatList, ExperimentError> {
        let mut stats = StatList::empty(kind);
        for (rec, utt) in pairs {
            let (hyp, reference) = if kind.on_transcript() {
                (rec.transcript.as_str(), utt.transcript.clean_text())
            } else {
                (rec.translation.as_str(), utt.translation.clone())
            };
            match (&mut stats, kind) {
                (StatList::Edit(v), MetricKind::Wer) => v.push(wer_stat(hyp, &reference)?),
                (StatList::Edit(v), MetricKind::Cer) => v.push(cer_stat(hyp, &reference)?),
                (StatList::Bleu(v), _) => v.push(bleu_stat(hyp, &reference)?),
                (StatList::Cut(v), _) => v.push(charcut_stat(hyp, &reference)),
                _ => unreachable!("stat list matches its metric"),
            }
        }
        Ok(stats)
    }

    fn extend(&mut self, other: &StatList) {
        match (self, other) {
            (StatList::Edit(a), StatList::Edit(b)) => a.extend_from_slice(b),
            (StatList::Bleu(a), StatList::Bleu(b)) => a.extend_from_slice(b),
            (StatList::Cut(a), StatList::Cut(b)) => a.extend_from_slice(b),
            _ => unreachable!("stat lists of one column share a kind"),
        }
    }

    /// Corpus-level score in display scale: error rates as percentages,
    /// BLEU in its usual 0..100 range.
    pub(crate) fn display_value(&self) -> Result<f64, ExperimentError> {
        Ok(match self {
            StatList::Edit(v) => 100.0 * corpus_rate(v)?,
            StatList::Bleu(v) => corpus_bleu(v.iter()),
            StatList::Cut(v) => 100.0 * corpus_charcut(v)?,
        })
    }

    fn significance_vs(
        &self,
        other: &StatList,
        direction: Direction,
        resamples: usize,
        seed: u64,
    ) -> Result<SignificanceResult, ExperimentError> {
        let result = match (self, other) {
            (StatList::Edit(a), StatList::Edit(b)) => bootstrap_significance(
                a,
                b,
                |s| corpus_rate(s).expect("resampled references stay non-empty"),
                direction,
                resamples,
                seed,
            )?,
            (StatList::Bleu(a), StatList::Bleu(b)) => {
                bootstrap_significance(a, b, |s| corpus_bleu(s.iter()), direction, resamples, seed)?
            }
            (StatList::Cut(a), StatList::Cut(b)) => bootstrap_significance(
                a,
                b,
                |s| corpus_charcut(s).expect("resampled references stay non-empty"),
                direction,
                resamples,
                seed,
            )?,
            _ => unreachable!("stat lists of one column share a kind"),
        };
        Ok(result)
    }
}

pub(crate) fn read_outputs_required(path: &Path) -> Result<Vec<OutputRecord>, ExperimentError> {
    match read_outputs(path) {
        Err(InferenceError::Io { path, source })
            if source.kind() == std::io::ErrorKind::NotFound =>
        {
            Err(ExperimentError::MissingArtifact(path))
        }
        other => Ok(other?),
    }
}

/// Joins outputs to references by utterance id; every reference must be
/// answered exactly once.
pub(crate) fn pair_with_refs<'a>(
    records: Vec<OutputRecord>,
    refs: &'a [Utterance],
) -> Result<Vec<(OutputRecord, &'a Utterance)>, ExperimentError> {
    if records.len() != refs.len() {
        return Err(ExperimentError::Invalid(format!(
            "{} outputs for {} reference utterances",
            records.len(),
            refs.len()
        )));
    }
    let by_id: BTreeMap<&str, &Utterance> = refs.iter().map(|u| (u.id.as_str(), u)).collect();
    records
        .into_iter()
        .map(|rec| {
            let utt = by_id.get(rec.id.as_str()).copied().ok_or_else(|| {
                ExperimentError::Invalid(format!("output {} has no reference utterance", rec.id))
            })?;
            Ok((rec, utt))
        })
        .collect()
}

/// Statistics of one (architecture, condition, seed, split, mode, metric)
/// combination, read back from its persisted output file.
pub(crate) fn seed_stats(
    layout: &RunLayout,
    refs: &[Utterance],
    arch: ArchitectureKind,
    condition: Condition,
    seed: u64,
    split: TestSplit,
    mode: Option<LidMode>,
    metric: MetricKind,
) -> Result<StatList, ExperimentError> {
    let path = layout.outputs_file(arch, condition, seed, split.split_name(), mode);
    let records = read_outputs_required(&path)?;
    let pairs = pair_with_refs(records, refs)?;
    StatList::gather(metric, &pairs)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_sd(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values);
    let var =
        values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64;
    Some(var.sqrt())
}

fn best_index(means: &[f64], direction: Direction) -> usize {
    let mut best = 0;
    for (i, &m) in means.iter().enumerate().skip(1) {
        let better = match direction {
            Direction::LowerBetter => m < means[best],
            Direction::HigherBetter => m > means[best],
        };
        if better {
            best = i;
        }
    }
    best
}

/// Builds the table from the output files a run left behind. The bootstrap
/// pairs per-utterance statistics concatenated across seeds, in a fixed
/// (seed, utterance) order shared by all systems.
pub fn build_report(
    cfg: &ExperimentConfig,
    layout: &RunLayout,
    corpus: &ToyCorpus,
) -> Result<ReportTable, ExperimentError> {
    let columns = columns_for(cfg);
    let modes: Vec<Option<LidMode>> =
        cfg.architectures.iter().map(|a| table_mode(*a, &cfg.lid_modes)).collect();

    let mut cells_by_column: Vec<Vec<ReportCell>> = Vec::with_capacity(columns.len());
    for col in &columns {
        let refs = corpus.split(col.split.split_name());
        let mut per_arch: Vec<(Vec<f64>, StatList)> = Vec::with_capacity(cfg.architectures.len());
        for (arch, mode) in cfg.architectures.iter().zip(&modes) {
            let mut concat = StatList::empty(col.metric);
            let mut values = Vec::with_capacity(cfg.seeds.len());
            for &seed in &cfg.seeds {
                let stats = seed_stats(
                    layout,
                    refs,
                    *arch,
                    col.condition,
                    seed,
                    col.split,
                    *mode,
                    col.metric,
                )?;
                values.push(stats.display_value()?);
                concat.extend(&stats);
            }
            per_arch.push((values, concat));
        }

        let means: Vec<f64> = per_arch.iter().map(|(v, _)| mean(v)).collect();
        let best = best_index(&means, col.metric.direction());
        let col_key = format!(
            "{}|{}|{}",
            col.condition.as_str(),
            col.split.split_name(),
            col.metric.as_str()
        );
        let bootstrap_root = sub_seed(cfg.bootstrap_seed, &col_key);
        let mut cells = Vec::with_capacity(per_arch.len());
        for (i, (values, stats)) in per_arch.iter().enumerate() {
            let significance = per_arch[best].1.significance_vs(
                stats,
                col.metric.direction(),
                cfg.resamples,
                sub_seed(bootstrap_root, cfg.architectures[i].as_str()),
            )?;
            cells.push(ReportCell {
                per_seed: values.clone(),
                mean: means[i],
                sd: sample_sd(values),
                best: i == best,
                significance,
            });
        }
        cells_by_column.push(cells);
    }

    let rows = cfg
        .architectures
        .iter()
        .enumerate()
        .map(|(i, arch)| ReportRow {
            arch: *arch,
            mode: modes[i],
            cells: cells_by_column.iter().map(|col| col[i].clone()).collect(),
        })
        .collect();
    Ok(ReportTable { seeds: cfg.seeds.clone(), columns, rows })
}

fn cell_text(cell: &ReportCell) -> String {
    let mut s = match cell.sd {
        Some(sd) => format!("{:.2}+-{sd:.2}", cell.mean),
        None => format!("{:.2}", cell.mean),
    };
    if cell.best {
        s = format!("[{s}]");
    }
    if cell.significance.verdict == Verdict::SimilarToBest {
        s.push('*');
    }
    s
}

impl ReportTable {
    /// Aligned text form with a legend. Stable bytes for a given table.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{REPORT_HEADER}");
        let seeds: Vec<String> = self.seeds.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(out, "Test-set scores over seed(s) {}.", seeds.join(", "));
        let _ = writeln!(
            out,
            "WER/CER/CharCut are percentages (lower is better); BLEU is higher-better."
        );
        if self.seeds.len() > 1 {
            let _ = writeln!(
                out,
                "Cells show mean+-sd across seeds (multi-seed aggregation extends the\n\
                 single-run tables)."
            );
        }
        let _ = writeln!(
            out,
            "[x] marks the best score in a column (bold in a typeset table); a\n\
             trailing * marks scores whose paired bootstrap against the best gives\n\
             p >= 0.05, i.e. similar to the best."
        );
        let gated: Vec<String> = self
            .rows
            .iter()
            .filter(|r| r.mode.is_some())
            .map(|r| format!("{}={}", r.arch.as_str(), lid_mode_label(r.mode)))
            .collect();
        if !gated.is_empty() {
            let _ = writeln!(out, "Routing for classifier-gated rows: {}.", gated.join(", "));
        }
        let _ = writeln!(out);

        let name_width = self
            .rows
            .iter()
            .map(|r| r.arch.as_str().len())
            .chain(["architecture".len()])
            .max()
            .unwrap_or(12);
        let headers: Vec<String> = self.columns.iter().map(|c| c.label()).collect();
        let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|row| row.cells.iter().map(cell_text).collect::<Vec<_>>())
            .collect();
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
        for (row, cells) in self.rows.iter().zip(&body) {
            let _ = write!(out, "{:<name_width$}", row.arch.as_str());
            for (cell, &w) in cells.iter().zip(&widths) {
                let _ = write!(out, " | {cell:>w$}");
            }
            let _ = writeln!(out);
        }
        out
    }

    /// Machine-readable long form: one line per (architecture, column),
    /// full-precision floats.
    pub fn render_tsv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{REPORT_HEADER}");
        let _ = writeln!(
            out,
            "arch\tmode\tcondition\tsplit\tmetric\tmean\tsd\tper_seed\tbest\tsimilar_to_best\tp_value"
        );
        for row in &self.rows {
            for (col, cell) in self.columns.iter().zip(&row.cells) {
                let per_seed: Vec<String> =
                    cell.per_seed.iter().map(|v| v.to_string()).collect();
                let sd = cell.sd.map(|v| v.to_string()).unwrap_or_default();
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    row.arch.as_str(),
                    lid_mode_label(row.mode),
                    col.condition.as_str(),
                    col.split.split_name(),
                    col.metric.as_str(),
                    cell.mean,
                    sd,
                    per_seed.join(";"),
                    u8::from(cell.best),
                    u8::from(cell.significance.verdict == Verdict::SimilarToBest),
                    cell.significance.p_value,
                );
            }
        }
        out
    }
}
