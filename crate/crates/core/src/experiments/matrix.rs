//! Runs one full experiment: corpus, the (architecture, condition, seed)
//! training matrix, decoding of both test splits under every applicable
//! routing mode, per-cell analyses, and the report reduction. Every
//! artifact lands in the run directory described by [`RunLayout`]; running
//! the same configuration again rewrites the same bytes.
//!
//! The run decomposes into stages ([`prepare_run`], [`train_base_cells`],
//! [`finetune_cells`], [`train_lid_cells`], [`evaluate_cells`],
//! [`write_reports`]) that communicate only through files in the run
//! directory, so they can execute in separate processes; [`run_matrix`]
//! chains them in order.
//!
//! Seeding: each run seed is fanned out per architecture and stage with
//! labeled sub-seeds (`init`, `train`, `finetune`; the classifier under
//! `lid`), so cells are independent and individually reproducible. The
//! corpus seed lives in the corpus configuration and is shared by all run
//! seeds: every seed sees the same data.

use std::collections::BTreeMap;
use std::path::Path;

use crate::corpus::io::{read_toy_corpus, write_toy_corpus};
use crate::corpus::toy::{
    ToyCorpus, generate_toy_corpus, SPLIT_DEV_CS, SPLIT_TEST_CS, SPLIT_TEST_MONO, SPLIT_TRAIN_CS,
    SPLIT_TRAIN_MONO,
};
use crate::corpus::{cs_proportion, LanguageTag};
use crate::inference::{run_system, LidMode, OutputRecord};
use crate::model::dims::ArchitectureKind;
use crate::model::{prepare_examples, LidModel, PreparedExample, System, Vocab};
use crate::training::{
    finetune, lid_accuracy, train, train_lid, Checkpoint, TraceWriter, TrainOutcome, TrainPlan,
};
use crate::util::sub_seed;

use super::analysis::{analyze_cell, histogram, write_analysis};
use super::config::{Condition, CorpusSource, ExperimentConfig};
use super::layout::RunLayout;
use super::lid_compare::{compare_lid_modes, LidCompareTable};
use super::report::{build_report, table_mode, ReportTable, TestSplit};
use super::{in_cell, io_err, ExperimentError};

/// What one trained cell reported when it finished.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub arch: ArchitectureKind,
    pub condition: Condition,
    pub seed: u64,
    pub best_step: u64,
    pub best_dev_metric: f64,
}

#[derive(Debug)]
pub struct MatrixOutcome {
    pub table: ReportTable,
    /// Present when gated architectures ran under both routing modes.
    pub lid_table: Option<LidCompareTable>,
    pub cells: Vec<CellOutcome>,
    /// Classifier accuracy on the code-switched test split, per trained
    /// classifier.
    pub lid_accuracy: BTreeMap<(Condition, u64), f64>,
}

fn ensure_dir(path: &Path) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), ExperimentError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Writes a training trace, replacing any earlier one so re-runs do not
/// append to stale files.
fn write_trace(path: &Path, outcome: &TrainOutcome) -> Result<(), ExperimentError> {
    if path.exists() {
        std::fs::remove_file(path).map_err(|e| io_err(path, e))?;
    }
    let mut writer = TraceWriter::open(path)?;
    for rec in &outcome.trace {
        writer.record(rec)?;
    }
    Ok(())
}

/// Loads a checkpoint that an earlier stage should have written; a missing
/// file names the path and the stage that produces it.
fn load_checkpoint(path: &Path, produced_by: &str) -> Result<Checkpoint, ExperimentError> {
    if !path.is_file() {
        return Err(ExperimentError::MissingArtifact(format!(
            "no checkpoint at {} ({produced_by} writes it)",
            path.display()
        )));
    }
    Ok(Checkpoint::load(path)?)
}

/// The corpus and its splits encoded once, shared by every stage.
pub struct PreparedData {
    pub corpus: ToyCorpus,
    pub vocab: Vocab,
    pub train_mono: Vec<PreparedExample>,
    pub train_cs: Vec<PreparedExample>,
    pub dev_cs: Vec<PreparedExample>,
    pub test_cs: Vec<PreparedExample>,
    pub test_mono: Vec<PreparedExample>,
}

fn resolve_corpus(
    cfg: &ExperimentConfig,
    layout: &RunLayout,
) -> Result<ToyCorpus, ExperimentError> {
    match &cfg.corpus {
        CorpusSource::Generate(corpus_cfg) => {
            let corpus = generate_toy_corpus(corpus_cfg)?;
            ensure_dir(&layout.corpus_dir())?;
            write_toy_corpus(&layout.corpus_dir(), &corpus)?;
            Ok(corpus)
        }
        CorpusSource::Load(path) => Ok(read_toy_corpus(path)?),
    }
}

fn prepare_data(cfg: &ExperimentConfig, layout: &RunLayout) -> Result<PreparedData, ExperimentError> {
    let corpus = resolve_corpus(cfg, layout)?;
    let vocab = Vocab::from_lexicon(&corpus.lexicon)?;
    let prepare = |split| prepare_examples(&corpus, split, &vocab);
    let train_mono = prepare(SPLIT_TRAIN_MONO)?;
    let train_cs = prepare(SPLIT_TRAIN_CS)?;
    let dev_cs = prepare(SPLIT_DEV_CS)?;
    let test_cs = prepare(SPLIT_TEST_CS)?;
    let test_mono = prepare(SPLIT_TEST_MONO)?;
    Ok(PreparedData { corpus, vocab, train_mono, train_cs, dev_cs, test_cs, test_mono })
}

fn corpus_stats_text(corpus: &ToyCorpus) -> Result<String, ExperimentError> {
    use std::fmt::Write as _;
    let mut out = String::from("#cs-corpus-stats v1\n");
    for (name, utts) in &corpus.splits {
        let _ = writeln!(out, "{name}: {} utterances", utts.len());
    }
    let mut proportions = Vec::new();
    for name in [SPLIT_TRAIN_CS, SPLIT_DEV_CS, SPLIT_TEST_CS] {
        for utt in corpus.split(name) {
            proportions.push(cs_proportion(&utt.transcript)?);
        }
    }
    if !proportions.is_empty() {
        let hist = histogram(&proportions, 10, 0.0, 1.0)?;
        let _ = writeln!(
            out,
            "\nswitched-token proportion over the code-switched splits\n\
             ({} utterances, share of bins at or above 0.5: {}):",
            hist.total(),
            hist.mass_above(0.5)
        );
        for row in hist.render_rows() {
            let _ = writeln!(out, "{row}");
        }
    }
    Ok(out)
}

fn plan_with_seed(template: &TrainPlan, seed: u64) -> TrainPlan {
    TrainPlan { seed, ..template.clone() }
}

/// Validates the configuration, lays out the run directory, writes the
/// resolved configuration, materialises the corpus, and encodes every
/// split once. Every other stage starts from the pair returned here.
pub fn prepare_run(
    cfg: &ExperimentConfig,
) -> Result<(RunLayout, PreparedData), ExperimentError> {
    cfg.validate()?;
    let layout = RunLayout::new(&cfg.out_dir);
    ensure_dir(layout.root())?;
    ensure_dir(&layout.outputs_dir())?;
    ensure_dir(&layout.reports_dir())?;
    write_text(&layout.config_file(), &cfg.render())?;
    let data = prepare_data(cfg, &layout)?;
    write_text(&layout.corpus_stats(), &corpus_stats_text(&data.corpus)?)?;
    Ok((layout, data))
}

fn train_lid_cell(
    cfg: &ExperimentConfig,
    layout: &RunLayout,
    data: &PreparedData,
    condition: Condition,
    seed: u64,
) -> Result<f64, ExperimentError> {
    let root = sub_seed(sub_seed(seed, "lid"), condition.as_str());
    let dims = cfg.dims.resolve(data.vocab.len(), data.corpus.cfg.phoneme_dim);
    let mut lid = LidModel::build(dims, sub_seed(root, "init"))?;
    let plan = plan_with_seed(&cfg.lid, sub_seed(root, "train"));

    let l1: Vec<PreparedExample> = data
        .train_mono
        .iter()
        .filter(|e| e.matrix_lang == LanguageTag::L1)
        .cloned()
        .collect();
    let l2: Vec<PreparedExample> = data
        .train_mono
        .iter()
        .filter(|e| e.matrix_lang == LanguageTag::L2)
        .cloned()
        .collect();
    let mut sources: Vec<&[PreparedExample]> = Vec::new();
    for src in [&l1, &l2] {
        if !src.is_empty() {
            sources.push(src);
        }
    }
    // Before fine-tuning no code-switched data exists, so the no-ft
    // classifier trains on the monolingual splits alone.
    let cs: &[PreparedExample] = match condition {
        Condition::NoFt => &[],
        Condition::Ft => &data.train_cs,
    };
    let outcome = train_lid(&mut lid, cs, &sources, cfg.lid_upsample, &data.dev_cs, &plan)?;

    ensure_dir(&layout.lid_dir(condition, seed))?;
    outcome.best.save(&layout.lid_ckpt(condition, seed))?;
    write_trace(&layout.lid_trace(condition, seed), &outcome)?;
    let (best, _) = outcome.best.restore_lid()?;
    Ok(lid_accuracy(&best, &data.test_cs))
}

/// Trains the language classifiers used by gated architectures, one per
/// (condition, seed), and stores their checkpoints and traces. Returns
/// each classifier's accuracy on the code-switched test split.
pub fn train_lid_cells(
    cfg: &ExperimentConfig,
    layout: &RunLayout,
    data: &PreparedData,
) -> Result<BTreeMap<(Condition, u64), f64>, ExperimentError> {
    if !cfg.needs_lid_training() {
        return Err(ExperimentError::Invalid(
            "no architecture in this configuration routes through a predicted language".to_string(),
        ));
    }
    let mut accuracies = BTreeMap::new();
    for &condition in &cfg.ordered_conditions() {
        for &seed in &cfg.seeds {
            let cell = format!("lid.{}.{seed}", condition.as_str());
            let accuracy = in_cell(&cell, train_lid_cell(cfg, layout, data, condition, seed))?;
            accuracies.insert((condition, seed), accuracy);
        }
    }
    Ok(accuracies)
}

/// Trains the base system for every (architecture, seed) cell on the
/// monolingual split. The base system is shared by both conditions, so its
/// artifacts always live under the no-ft directory.
pub fn train_base_cells(
    cfg: &ExperimentConfig,
    layout: &RunLayout,
    data: &PreparedData,
) -> Result<Vec<CellOutcome>, ExperimentError> {
    let dims = cfg.dims.resolve(data.vocab.len(), data.corpus.cfg.phoneme_dim);
    let mut cells = Vec::new();
    for &seed in &cfg.seeds {
        for &arch in &cfg.architectures {
            let cell_root = sub_seed(seed, arch.as_str());
            let cell = format!("{}.no-ft.{seed}", arch.as_str());
            let run = || -> Result<TrainOutcome, ExperimentError> {
                let mut system = System::build(
                    arch,
                    dims.clone(),
                    data.vocab.clone(),
                    sub_seed(cell_root, "init"),
                )?;
                let plan = plan_with_seed(&cfg.train, sub_seed(cell_root, "train"));
                Ok(train(&mut system, &data.train_mono, &data.dev_cs, &plan, SPLIT_DEV_CS)?)
            };
            let outcome = in_cell(&cell, run())?;
            ensure_dir(&layout.system_dir(arch, Condition::NoFt, seed))?;
            outcome.best.save(&layout.system_ckpt(arch, Condition::NoFt, seed))?;
            write_trace(&layout.system_trace(arch, Condition::NoFt, seed), &outcome)?;
            cells.push(CellOutcome {
                arch,
                condition: Condition::NoFt,
                seed,
                best_step: outcome.best_step,
                best_dev_metric: outcome.best_metric,
            });
        }
    }
    Ok(cells)
}

/// Fine-tunes every (architecture, seed) cell on the code-switched split,
/// starting from the stored base checkpoint.
pub fn finetune_cells(
    cfg: &ExperimentConfig,
    layout: &RunLayout,
    data: &PreparedData,
) -> Result<Vec<CellOutcome>, ExperimentError> {
    if !cfg.conditions.contains(&Condition::Ft) {
        return Err(ExperimentError::Invalid(
            "this configuration has no fine-tuning condition".to_string(),
        ));
    }
    let mut cells = Vec::new();
    for &seed in &cfg.seeds {
        for &arch in &cfg.architectures {
            let cell_root = sub_seed(seed, arch.as_str());
            let cell = format!("{}.ft.{seed}", arch.as_str());
            let run = || -> Result<TrainOutcome, ExperimentError> {
                let base = load_checkpoint(
                    &layout.system_ckpt(arch, Condition::NoFt, seed),
                    "base training",
                )?;
                let plan = plan_with_seed(&cfg.finetune, sub_seed(cell_root, "finetune"));
                Ok(finetune(&base, arch, &data.train_cs, &data.dev_cs, &plan)?)
            };
            let outcome = in_cell(&cell, run())?;
            ensure_dir(&layout.system_dir(arch, Condition::Ft, seed))?;
            outcome.best.save(&layout.system_ckpt(arch, Condition::Ft, seed))?;
            write_trace(&layout.system_trace(arch, Condition::Ft, seed), &outcome)?;
            cells.push(CellOutcome {
                arch,
                condition: Condition::Ft,
                seed,
                best_step: outcome.best_step,
                best_dev_metric: outcome.best_metric,
            });
        }
    }
    Ok(cells)
}

fn decode_split(
    system: &System,
    lid: Option<&LidModel>,
    examples: &[PreparedExample],
    mode: LidMode,
    cfg: &ExperimentConfig,
) -> Result<Vec<OutputRecord>, ExperimentError> {
    examples
        .iter()
        .map(|ex| {
            let out = run_system(system, lid, ex, mode, &cfg.decode)?;
            Ok(OutputRecord::new(&ex.id, &out))
        })
        .collect()
}

fn evaluate_cell(
    cfg: &ExperimentConfig,
    layout: &RunLayout,
    data: &PreparedData,
    lids: &mut BTreeMap<(Condition, u64), LidModel>,
    arch: ArchitectureKind,
    condition: Condition,
    seed: u64,
) -> Result<usize, ExperimentError> {
    let ckpt = load_checkpoint(
        &layout.system_ckpt(arch, condition, seed),
        match condition {
            Condition::NoFt => "base training",
            Condition::Ft => "fine-tuning",
        },
    )?;
    let (system, _) = ckpt.restore_system()?;
    let modes: Vec<Option<LidMode>> = if arch.uses_lid() {
        cfg.lid_modes.iter().map(|m| Some(*m)).collect()
    } else {
        vec![None]
    };
    let mut written = 0;
    let mut table_records: Option<Vec<OutputRecord>> = None;
    let chosen = table_mode(arch, &cfg.lid_modes);
    for (split, examples) in
        [(TestSplit::Cs, &data.test_cs), (TestSplit::Mono, &data.test_mono)]
    {
        for mode in &modes {
            if matches!(mode, Some(LidMode::Predicted))
                && !lids.contains_key(&(condition, seed))
            {
                let ckpt = load_checkpoint(
                    &layout.lid_ckpt(condition, seed),
                    "classifier training",
                )?;
                let (model, _) = ckpt.restore_lid()?;
                lids.insert((condition, seed), model);
            }
            let lid = match mode {
                Some(LidMode::Predicted) => Some(&lids[&(condition, seed)]),
                _ => None,
            };
            let records =
                decode_split(&system, lid, examples, mode.unwrap_or(LidMode::Oracle), cfg)?;
            let path = layout.outputs_file(arch, condition, seed, split.split_name(), *mode);
            crate::inference::write_outputs(&path, &records)?;
            written += 1;
            if split == TestSplit::Cs && *mode == chosen {
                table_records = Some(records);
            }
        }
    }
    let records = table_records.expect("the table routing mode is always evaluated");
    let analysis = analyze_cell(data.corpus.split(SPLIT_TEST_CS), &records)?;
    write_analysis(&layout.analysis_file(arch, condition, seed), &analysis)?;
    Ok(written)
}

/// Decodes both test splits for every cell under every applicable routing
/// mode, writing output records and the per-cell analysis. Checkpoints are
/// read back from the run directory, so training must have happened first
/// (in this process or an earlier one). Returns the number of output files
/// written.
pub fn evaluate_cells(
    cfg: &ExperimentConfig,
    layout: &RunLayout,
    data: &PreparedData,
) -> Result<usize, ExperimentError> {
    let mut lids = BTreeMap::new();
    let mut written = 0;
    for &seed in &cfg.seeds {
        for &arch in &cfg.architectures {
            for &condition in &cfg.ordered_conditions() {
                let cell = format!("{}.{}.{seed}", arch.as_str(), condition.as_str());
                written += in_cell(
                    &cell,
                    evaluate_cell(cfg, layout, data, &mut lids, arch, condition, seed),
                )?;
            }
        }
    }
    Ok(written)
}

/// Reduces the stored outputs to the report table, plus the routing-mode
/// comparison when both modes ran for at least one gated architecture, and
/// writes the rendered text and TSV files.
pub fn write_reports(
    cfg: &ExperimentConfig,
    layout: &RunLayout,
    corpus: &ToyCorpus,
) -> Result<(ReportTable, Option<LidCompareTable>), ExperimentError> {
    let table = build_report(cfg, layout, corpus)?;
    write_text(&layout.report_text(), &table.render_text())?;
    write_text(&layout.report_tsv(), &table.render_tsv())?;

    let both_modes = cfg.lid_modes.contains(&LidMode::Oracle)
        && cfg.lid_modes.contains(&LidMode::Predicted);
    let lid_table = if both_modes && cfg.architectures.iter().any(|a| a.uses_lid()) {
        let t = compare_lid_modes(cfg, layout, corpus)?;
        write_text(&layout.lid_compare_text(), &t.render_text())?;
        write_text(&layout.lid_compare_tsv(), &t.render_tsv())?;
        Some(t)
    } else {
        None
    };
    Ok((table, lid_table))
}

/// Runs the whole matrix and reduces it to the report tables. Any failure
/// aborts the run with the failing cell named in the error.
pub fn run_matrix(cfg: &ExperimentConfig) -> Result<MatrixOutcome, ExperimentError> {
    let (layout, data) = prepare_run(cfg)?;

    let lid_accuracy = if cfg.needs_lid_training() {
        train_lid_cells(cfg, &layout, &data)?
    } else {
        BTreeMap::new()
    };
    let mut cells = train_base_cells(cfg, &layout, &data)?;
    if cfg.conditions.contains(&Condition::Ft) {
        cells.extend(finetune_cells(cfg, &layout, &data)?);
    }
    evaluate_cells(cfg, &layout, &data)?;
    let (table, lid_table) = write_reports(cfg, &layout, &data.corpus)?;

    Ok(MatrixOutcome { table, lid_table, cells, lid_accuracy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::smoke_config;
    use crate::metrics::Verdict;
    use sha2::{Digest, Sha256};
    use std::path::PathBuf;

    fn gated_smoke(dir: &Path) -> ExperimentConfig {
        let mut cfg = smoke_config(dir);
        cfg.architectures = vec![ArchitectureKind::CascadeUnidirect];
        cfg.conditions = Condition::ALL.to_vec();
        cfg
    }

    #[test]
    fn single_cell_run_populates_every_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = smoke_config(&dir.path().join("run"));
        let outcome = run_matrix(&cfg).unwrap();

        assert_eq!(outcome.cells.len(), 1);
        assert_eq!(outcome.table.rows.len(), 1);
        assert!(outcome.lid_table.is_none());
        assert!(outcome.lid_accuracy.is_empty());
        for row in &outcome.table.rows {
            for cell in &row.cells {
                assert!(cell.best);
                assert_eq!(cell.significance.verdict, Verdict::SimilarToBest);
                assert!(cell.mean.is_finite());
            }
        }

        let layout = RunLayout::new(&cfg.out_dir);
        let arch = cfg.architectures[0];
        for path in [
            layout.config_file(),
            layout.corpus_dir().join("manifest.json"),
            layout.system_ckpt(arch, Condition::NoFt, 0),
            layout.system_trace(arch, Condition::NoFt, 0),
            layout.outputs_file(arch, Condition::NoFt, 0, SPLIT_TEST_CS, None),
            layout.outputs_file(arch, Condition::NoFt, 0, SPLIT_TEST_MONO, None),
            layout.analysis_file(arch, Condition::NoFt, 0),
            layout.report_text(),
            layout.report_tsv(),
            layout.corpus_stats(),
        ] {
            assert!(path.is_file(), "missing {}", path.display());
        }

        // The stored table is exactly the reduction of the stored outputs.
        let corpus = read_toy_corpus(&layout.corpus_dir()).unwrap();
        let rebuilt = build_report(&cfg, &layout, &corpus).unwrap();
        let stored = std::fs::read_to_string(layout.report_text()).unwrap();
        assert_eq!(rebuilt.render_text(), stored);
    }

    #[test]
    fn gated_run_trains_classifiers_and_compares_modes() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = gated_smoke(&dir.path().join("run"));
        let outcome = run_matrix(&cfg).unwrap();

        let layout = RunLayout::new(&cfg.out_dir);
        let arch = cfg.architectures[0];
        for condition in Condition::ALL {
            assert!(layout.lid_ckpt(condition, 0).is_file());
            assert!(layout.lid_trace(condition, 0).is_file());
            for split in [SPLIT_TEST_CS, SPLIT_TEST_MONO] {
                for mode in [LidMode::Oracle, LidMode::Predicted] {
                    let path = layout.outputs_file(arch, condition, 0, split, Some(mode));
                    assert!(path.is_file(), "missing {}", path.display());
                }
            }
        }
        assert_eq!(outcome.cells.len(), 2);
        assert_eq!(outcome.lid_accuracy.len(), 2);
        assert_eq!(outcome.table.columns.len(), 8);
        assert_eq!(outcome.table.rows[0].mode, Some(LidMode::Predicted));

        let lid_table = outcome.lid_table.expect("both modes ran");
        assert_eq!(lid_table.rows.len(), 1);
        let corpus = read_toy_corpus(&layout.corpus_dir()).unwrap();
        let rebuilt = compare_lid_modes(&cfg, &layout, &corpus).unwrap();
        assert_eq!(rebuilt.render_tsv(), lid_table.render_tsv());
        let stored = std::fs::read_to_string(layout.lid_compare_tsv()).unwrap();
        assert_eq!(stored, lid_table.render_tsv());
    }

    fn dir_digests(root: &Path) -> Vec<(PathBuf, [u8; 32])> {
        fn walk(dir: &Path, root: &Path, out: &mut Vec<(PathBuf, [u8; 32])>) {
            let mut entries: Vec<_> =
                std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
            entries.sort();
            for path in entries {
                if path.is_dir() {
                    walk(&path, root, out);
                } else {
                    let bytes = std::fs::read(&path).unwrap();
                    let rel = path.strip_prefix(root).unwrap().to_path_buf();
                    out.push((rel, Sha256::digest(&bytes).into()));
                }
            }
        }
        let mut out = Vec::new();
        walk(root, root, &mut out);
        out
    }

    /// Digests of everything except config.txt, which embeds the output
    /// directory and is the only path-dependent file in a run tree.
    fn comparable_digests(root: &Path) -> Vec<(PathBuf, [u8; 32])> {
        dir_digests(root)
            .into_iter()
            .filter(|(p, _)| p != Path::new("config.txt"))
            .collect()
    }

    #[test]
    fn identical_configs_write_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_a = smoke_config(&dir.path().join("a"));
        let cfg_b = smoke_config(&dir.path().join("b"));
        run_matrix(&cfg_a).unwrap();
        run_matrix(&cfg_b).unwrap();

        let digests_a = comparable_digests(&cfg_a.out_dir);
        let digests_b = comparable_digests(&cfg_b.out_dir);
        assert!(!digests_a.is_empty());
        assert_eq!(digests_a, digests_b);
    }

    #[test]
    fn staged_run_matches_one_shot() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg_a = smoke_config(&dir.path().join("a"));
        cfg_a.conditions = Condition::ALL.to_vec();
        let mut cfg_b = smoke_config(&dir.path().join("b"));
        cfg_b.conditions = Condition::ALL.to_vec();

        run_matrix(&cfg_a).unwrap();

        // The same run as five separate stage invocations, each starting
        // from a fresh prepare (as separate processes would).
        let (layout, data) = prepare_run(&cfg_b).unwrap();
        train_base_cells(&cfg_b, &layout, &data).unwrap();
        let (layout, data) = prepare_run(&cfg_b).unwrap();
        finetune_cells(&cfg_b, &layout, &data).unwrap();
        let (layout, data) = prepare_run(&cfg_b).unwrap();
        let written = evaluate_cells(&cfg_b, &layout, &data).unwrap();
        assert_eq!(written, 4);
        let (layout, data) = prepare_run(&cfg_b).unwrap();
        write_reports(&cfg_b, &layout, &data.corpus).unwrap();

        assert_eq!(comparable_digests(&cfg_a.out_dir), comparable_digests(&cfg_b.out_dir));
    }

    #[test]
    fn evaluation_without_training_names_the_missing_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = smoke_config(&dir.path().join("run"));
        let (layout, data) = prepare_run(&cfg).unwrap();
        let err = evaluate_cells(&cfg, &layout, &data).unwrap_err();
        match err {
            ExperimentError::Cell { cell, source } => {
                assert_eq!(cell, "e2e-bidirect-shared.no-ft.0");
                let message = source.to_string();
                assert!(message.contains("no checkpoint at"), "got: {message}");
                assert!(message.contains("best.ckpt"), "got: {message}");
            }
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn failing_cell_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = smoke_config(&dir.path().join("run"));
        if let CorpusSource::Generate(c) = &mut cfg.corpus {
            c.sizes.dev_cs = 0;
        }
        let err = run_matrix(&cfg).unwrap_err();
        match err {
            ExperimentError::Cell { cell, .. } => {
                assert_eq!(cell, "e2e-bidirect-shared.no-ft.0");
            }
            other => panic!("unexpected: {other}"),
        }
    }
}
