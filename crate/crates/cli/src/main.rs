//! Command-line front end for the code-switched speech translation
//! experiments.
//!
//! The stage subcommands (`train`, `finetune`, `train-lid`, `evaluate`,
//! `report`) all read one experiment configuration and operate on its run
//! directory; each stage re-derives the corpus deterministically and finds
//! the checkpoints earlier stages stored, so the stages can run in any
//! number of separate invocations. `gen-corpus`, `parse` and `analyze` are
//! standalone utilities over corpora and decoded output files.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context as _};
use clap::{Args, Parser, Subcommand, ValueEnum};

use csst_core::corpus::io::{read_toy_corpus, write_toy_corpus};
use csst_core::corpus::parse::{parse_chat_annotation, parse_fisher_annotation};
use csst_core::corpus::toy::{generate_toy_corpus, ToyCorpusConfig};
use csst_core::corpus::{cs_proportion, LanguagePair, LanguageTag};
use csst_core::experiments::{
    analyze_cell, evaluate_cells, finetune_cells, histogram, prepare_run, train_base_cells,
    train_lid_cells, write_analysis, write_reports, CellAnalysis, CorpusSource, ExperimentConfig,
};
use csst_core::inference::read_outputs;

/// Header line for the JSON records `parse` emits.
const PARSE_HEADER: &str = "#cs-parse v1";

#[derive(Parser)]
#[command(
    name = "csst",
    version,
    about = "Train and evaluate joint transcription+translation systems on code-switched toy speech",
    after_help = "Stage order for a full run: train, finetune (if configured), train-lid (if any \
                  architecture routes by predicted language), evaluate, report."
)]
struct Cli {
    /// Print progress while running (-v for stages, -vv for details).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic toy corpus into a directory.
    GenCorpus(GenCorpusArgs),
    /// Parse annotated transcripts into language-tagged records.
    Parse(ParseArgs),
    /// Train the base system for every (architecture, seed) cell.
    Train(StageArgs),
    /// Fine-tune every cell on the code-switched training split.
    Finetune(StageArgs),
    /// Train the language classifiers used by gated architectures.
    TrainLid(StageArgs),
    /// Decode the test splits for every cell and store outputs and analyses.
    Evaluate(StageArgs),
    /// Score one decoded outputs file against a corpus split.
    Analyze(AnalyzeArgs),
    /// Reduce stored outputs to the report tables.
    Report(StageArgs),
}

#[derive(Args)]
struct GenCorpusArgs {
    /// Experiment configuration whose corpus section to use; without it the
    /// default corpus configuration is generated.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the corpus seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory to write the corpus into.
    #[arg(long)]
    out: PathBuf,
}

/// The two annotation conventions `parse` understands.
#[derive(Clone, Copy, ValueEnum)]
enum AnnotationFormat {
    /// Inline spans: `un <foreign lang="English"> show </foreign> bueno`.
    InlineSpan,
    /// Word-suffix codes: `hay una [/] una que dice (.) it's@s:eng`.
    WordSuffix,
}

#[derive(Clone, Copy, ValueEnum)]
enum MatrixArg {
    L1,
    L2,
}

#[derive(Args)]
struct ParseArgs {
    /// File of annotated transcripts, one per line; blank lines are skipped.
    #[arg(long)]
    input: PathBuf,
    /// Annotation convention of the input.
    #[arg(long, value_enum)]
    format: AnnotationFormat,
    /// Name of the first language (plain words default to the matrix).
    #[arg(long, default_value = "spanish")]
    l1: String,
    /// Name of the second language.
    #[arg(long, default_value = "english")]
    l2: String,
    /// Which language untagged words belong to.
    #[arg(long, value_enum, default_value_t = MatrixArg::L1)]
    matrix: MatrixArg,
    /// Write the records here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StageArgs {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configuration's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Runs only this seed in place of the configuration's seed list.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Corpus directory, as written by gen-corpus or under a run directory.
    #[arg(long)]
    corpus: PathBuf,
    /// Split whose references the outputs are scored against.
    #[arg(long, default_value = "test_cs")]
    split: String,
    /// Decoded outputs file.
    #[arg(long)]
    outputs: PathBuf,
    /// Also write the analysis as JSON to this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", render_error(&err));
            ExitCode::FAILURE
        }
    }
}

fn init_logging(verbosity: u8) {
    let default = match verbosity {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default))
        .format_timestamp(None)
        .init();
}

/// Formats an error with its cause chain, skipping causes a message already
/// embeds (several library errors render their source themselves).
fn render_error(err: &anyhow::Error) -> String {
    let mut message = err.to_string();
    for cause in err.chain().skip(1) {
        let text = cause.to_string();
        if !message.contains(&text) {
            message.push_str(": ");
            message.push_str(&text);
        }
    }
    message
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::GenCorpus(args) => gen_corpus(args),
        Command::Parse(args) => parse_annotations(args),
        Command::Train(args) => stage_train(args),
        Command::Finetune(args) => stage_finetune(args),
        Command::TrainLid(args) => stage_train_lid(args),
        Command::Evaluate(args) => stage_evaluate(args),
        Command::Analyze(args) => analyze(args),
        Command::Report(args) => stage_report(args),
    }
}

fn gen_corpus(args: GenCorpusArgs) -> anyhow::Result<()> {
    let mut corpus_cfg = match &args.config {
        Some(path) => match ExperimentConfig::from_file(path)?.corpus {
            CorpusSource::Generate(cfg) => cfg,
            CorpusSource::Load(dir) => bail!(
                "{} loads its corpus from {} instead of generating one",
                path.display(),
                dir.display()
            ),
        },
        None => ToyCorpusConfig::default(),
    };
    if let Some(seed) = args.seed {
        corpus_cfg.seed = seed;
    }
    let corpus = generate_toy_corpus(&corpus_cfg)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    write_toy_corpus(&args.out, &corpus)?;
    for (name, utts) in &corpus.splits {
        println!("{name}: {} utterances", utts.len());
    }
    println!("corpus written to {}", args.out.display());
    Ok(())
}

fn parse_annotations(args: ParseArgs) -> anyhow::Result<()> {
    let pair = LanguagePair::new(&args.l1, &args.l2);
    let matrix = match args.matrix {
        MatrixArg::L1 => LanguageTag::L1,
        MatrixArg::L2 => LanguageTag::L2,
    };
    let text = std::fs::read_to_string(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;

    let mut rendered = String::from(PARSE_HEADER);
    rendered.push('\n');
    let mut parsed = 0usize;
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let transcript = match args.format {
            AnnotationFormat::InlineSpan => parse_fisher_annotation(line, matrix, &pair),
            AnnotationFormat::WordSuffix => parse_chat_annotation(line, matrix, &pair),
        }
        .map_err(|e| anyhow!("line {}: {e}", idx + 1))?;
        let (l1_tokens, l2_tokens) = transcript.lang_counts();
        let record = serde_json::json!({
            "line": idx + 1,
            "clean": transcript.clean_text(),
            "tokens": transcript.tokens.iter()
                .map(|t| serde_json::json!({"surface": t.surface, "lang": t.lang}))
                .collect::<Vec<_>>(),
            "l1_tokens": l1_tokens,
            "l2_tokens": l2_tokens,
            "switched_proportion": cs_proportion(&transcript).ok(),
        });
        let _ = writeln!(rendered, "{record}");
        parsed += 1;
    }

    match &args.out {
        Some(path) => {
            std::fs::write(path, rendered)
                .with_context(|| format!("writing {}", path.display()))?;
            println!("{parsed} transcripts written to {}", path.display());
        }
        None => {
            print!("{rendered}");
        }
    }
    Ok(())
}

/// Loads the experiment configuration and applies the command-line
/// overrides, then prepares the run directory and splits.
fn load_stage(args: &StageArgs) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_file(&args.config)?;
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    Ok(cfg)
}

fn stage_train(args: StageArgs) -> anyhow::Result<()> {
    let cfg = load_stage(&args)?;
    let (layout, data) = prepare_run(&cfg)?;
    log::info!("run directory: {}", layout.root().display());
    let cells = train_base_cells(&cfg, &layout, &data)?;
    for cell in &cells {
        println!(
            "trained {} seed {}: best step {}, dev metric {:.4}",
            cell.arch, cell.seed, cell.best_step, cell.best_dev_metric
        );
    }
    Ok(())
}

fn stage_finetune(args: StageArgs) -> anyhow::Result<()> {
    let cfg = load_stage(&args)?;
    let (layout, data) = prepare_run(&cfg)?;
    let cells = finetune_cells(&cfg, &layout, &data)?;
    for cell in &cells {
        println!(
            "fine-tuned {} seed {}: best step {}, dev metric {:.4}",
            cell.arch, cell.seed, cell.best_step, cell.best_dev_metric
        );
    }
    Ok(())
}

fn stage_train_lid(args: StageArgs) -> anyhow::Result<()> {
    let cfg = load_stage(&args)?;
    let (layout, data) = prepare_run(&cfg)?;
    let accuracies = train_lid_cells(&cfg, &layout, &data)?;
    for ((condition, seed), accuracy) in &accuracies {
        println!(
            "classifier [{}] seed {seed}: accuracy {accuracy:.3} on the code-switched test split",
            condition.label()
        );
    }
    Ok(())
}

fn stage_evaluate(args: StageArgs) -> anyhow::Result<()> {
    let cfg = load_stage(&args)?;
    let (layout, data) = prepare_run(&cfg)?;
    let written = evaluate_cells(&cfg, &layout, &data)?;
    println!("wrote {written} output files under {}", layout.outputs_dir().display());
    Ok(())
}

fn stage_report(args: StageArgs) -> anyhow::Result<()> {
    let cfg = load_stage(&args)?;
    let (layout, data) = prepare_run(&cfg)?;
    let (table, lid_table) = write_reports(&cfg, &layout, &data.corpus)?;
    print!("{}", table.render_text());
    if let Some(lid) = &lid_table {
        println!();
        print!("{}", lid.render_text());
    }
    log::info!("reports written under {}", layout.reports_dir().display());
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> anyhow::Result<()> {
    let corpus = read_toy_corpus(&args.corpus)?;
    let refs = corpus.split(&args.split);
    if refs.is_empty() {
        let known: Vec<&str> = corpus.splits.keys().map(|s| s.as_str()).collect();
        bail!(
            "split {:?} is empty or unknown; this corpus has: {}",
            args.split,
            known.join(", ")
        );
    }
    let outputs = read_outputs(&args.outputs)?;
    let analysis = analyze_cell(refs, &outputs)?;
    print_analysis(&analysis);
    print_proportion_histogram(refs)?;
    if let Some(path) = &args.out {
        write_analysis(path, &analysis)?;
        println!("analysis written to {}", path.display());
    }
    Ok(())
}

fn print_analysis(analysis: &CellAnalysis) {
    println!("utterances: {}", analysis.n_utterances);
    match analysis.span_accuracy {
        Some(acc) => println!("switch-span transcription accuracy: {acc:.3}"),
        None => println!("switch-span transcription accuracy: undefined (no switched spans)"),
    }
    match &analysis.wer_vs_switching {
        Some(reg) => println!(
            "word error rate vs switched proportion: slope {:.3}, intercept {:.3}, r^2 {:.3}",
            reg.slope, reg.intercept, reg.r_squared
        ),
        None => println!(
            "word error rate vs switched proportion: undefined (too few segments or constant proportion)"
        ),
    }
}

fn print_proportion_histogram(refs: &[csst_core::corpus::Utterance]) -> anyhow::Result<()> {
    let proportions: Result<Vec<f64>, _> =
        refs.iter().map(|u| cs_proportion(&u.transcript)).collect();
    let hist = histogram(&proportions?, 10, 0.0, 1.0)?;
    println!("switched-token proportion of the references:");
    for row in hist.render_rows() {
        println!("{row}");
    }
    Ok(())
}

