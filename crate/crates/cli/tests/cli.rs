//! End-to-end tests of the `csst` binary: argument handling, the staged
//! pipeline over a tiny configuration, and the determinism the file
//! formats promise.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use csst_core::experiments::config::smoke_config;
use csst_core::experiments::RunLayout;
use csst_core::model::dims::ArchitectureKind;

fn csst() -> Command {
    Command::new(env!("CARGO_BIN_EXE_csst"))
}

fn run(args: &[&str]) -> Output {
    csst().args(args).output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Writes the tiny smoke configuration pointing at `run_dir` and returns
/// the configuration file path.
fn write_smoke_config(dir: &Path, run_dir: &Path) -> PathBuf {
    let cfg = smoke_config(run_dir);
    let path = dir.join("exp.cfg");
    std::fs::write(&path, cfg.render()).unwrap();
    path
}

#[test]
fn unknown_flag_prints_usage_and_fails() {
    let out = run(&["--definitely-not-a-flag"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("Usage"), "stderr: {}", stderr(&out));

    let out = run(&["train", "--bogus"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("Usage"), "stderr: {}", stderr(&out));
}

#[test]
fn no_arguments_shows_usage() {
    let out = run(&[]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("Usage"), "stderr: {}", stderr(&out));
}

#[test]
fn gen_corpus_same_seed_writes_identical_directories() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_smoke_config(dir.path(), &dir.path().join("unused-run"));
    let cfg = cfg.to_str().unwrap();
    let paths: Vec<PathBuf> = ["a", "b", "c"].iter().map(|n| dir.path().join(n)).collect();

    for (path, seed) in [(&paths[0], "7"), (&paths[1], "7"), (&paths[2], "8")] {
        let out = run(&[
            "gen-corpus",
            "--config",
            cfg,
            "--seed",
            seed,
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "stderr: {}", stderr(&out));
    }

    let mut same = true;
    for file in ["manifest.json", "records.jsonl", "splits.tsv"] {
        let a = std::fs::read(paths[0].join(file)).unwrap();
        let b = std::fs::read(paths[1].join(file)).unwrap();
        let c = std::fs::read(paths[2].join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical seeds");
        same &= a == c;
    }
    assert!(!same, "different seeds produced identical corpora");
}

#[test]
fn pipeline_stages_compose_and_report_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let cfg_path = write_smoke_config(dir.path(), &run_dir);
    let cfg = cfg_path.to_str().unwrap();

    let out = run(&["train", "--config", cfg]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("trained e2e-bidirect-shared seed 0"));

    let out = run(&["evaluate", "--config", cfg]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    let out = run(&["report", "--config", cfg]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("architecture"), "stdout: {}", stdout(&out));

    let layout = RunLayout::new(&run_dir);
    let text = std::fs::read(layout.report_text()).unwrap();
    let tsv = std::fs::read(layout.report_tsv()).unwrap();

    // Re-running the reduction over the stored outputs rewrites the same
    // bytes.
    let out = run(&["report", "--config", cfg]);
    assert!(out.status.success());
    assert_eq!(std::fs::read(layout.report_text()).unwrap(), text);
    assert_eq!(std::fs::read(layout.report_tsv()).unwrap(), tsv);
}

#[test]
fn evaluate_without_checkpoint_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_smoke_config(dir.path(), &dir.path().join("run"));

    let out = run(&["evaluate", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("no checkpoint at"), "stderr: {err}");
    assert!(err.contains("e2e-bidirect-shared.no-ft.0"), "stderr: {err}");
}

#[test]
fn analyze_scores_stored_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let cfg_path = write_smoke_config(dir.path(), &run_dir);
    let cfg = cfg_path.to_str().unwrap();
    assert!(run(&["train", "--config", cfg]).status.success());
    assert!(run(&["evaluate", "--config", cfg]).status.success());

    let layout = RunLayout::new(&run_dir);
    let outputs = layout.outputs_file(
        ArchitectureKind::E2EBidirectShared,
        csst_core::experiments::Condition::NoFt,
        0,
        "test_cs",
        None,
    );
    let analysis = dir.path().join("analysis.json");
    let out = run(&[
        "analyze",
        "--corpus",
        layout.corpus_dir().to_str().unwrap(),
        "--outputs",
        outputs.to_str().unwrap(),
        "--out",
        analysis.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("utterances: 8"), "stdout: {text}");
    assert!(text.contains("switched-token proportion"), "stdout: {text}");
    let written = std::fs::read_to_string(&analysis).unwrap();
    assert!(written.starts_with("#cs-analysis v1"));

    let out = run(&[
        "analyze",
        "--corpus",
        layout.corpus_dir().to_str().unwrap(),
        "--split",
        "no_such_split",
        "--outputs",
        outputs.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("no_such_split"), "stderr: {}", stderr(&out));
}

#[test]
fn stage_preconditions_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_smoke_config(dir.path(), &dir.path().join("run"));
    let cfg = cfg_path.to_str().unwrap();

    // The smoke configuration has no gated architecture and no fine-tuning
    // condition, so these stages have nothing to do and must say so.
    let out = run(&["train-lid", "--config", cfg]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("no architecture"), "stderr: {}", stderr(&out));

    let out = run(&["finetune", "--config", cfg]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("fine-tuning"), "stderr: {}", stderr(&out));
}

#[test]
fn parse_handles_both_annotation_conventions() {
    let dir = tempfile::tempdir().unwrap();
    let inline = dir.path().join("inline.txt");
    std::fs::write(
        &inline,
        "un <foreign lang=\"English\"> show </foreign>, a mi me gusta\n",
    )
    .unwrap();
    let out = run(&["parse", "--input", inline.to_str().unwrap(), "--format", "inline-span"]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.starts_with("#cs-parse v1\n"), "stdout: {text}");
    assert!(text.contains("\"clean\":\"un show, a mi me gusta\""), "stdout: {text}");

    let suffix = dir.path().join("suffix.txt");
    std::fs::write(&suffix, "hay una [/] una que dice (.) it's@s:eng five@s:eng\n").unwrap();
    let records = dir.path().join("records.jsonl");
    let out = run(&[
        "parse",
        "--input",
        suffix.to_str().unwrap(),
        "--format",
        "word-suffix",
        "--out",
        records.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let written = std::fs::read_to_string(&records).unwrap();
    assert!(written.contains("\"clean\":\"hay una una que dice it's five\""), "{written}");

    // Malformed markup names the line it appeared on.
    let broken = dir.path().join("broken.txt");
    std::fs::write(&broken, "bien\nuno <foreign lang=\"English\"> dos\n").unwrap();
    let out = run(&["parse", "--input", broken.to_str().unwrap(), "--format", "inline-span"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("line 2"), "stderr: {}", stderr(&out));
}
