//! Experiment configuration: a flat `key = value` text format under a
//! `#cs-exp v1` header. Every key is documented here, unknown keys are
//! rejected with their line number, and [`ExperimentConfig::render`] writes
//! the canonical form back out so a run directory always carries the exact
//! configuration it was produced from.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::toy::{SplitSizes, ToyCorpusConfig};
use crate::inference::{DecodeConfig, DecodeStrategy, LidMode};
use crate::metrics::DEFAULT_RESAMPLES;
use crate::model::dims::ArchitectureKind;
use crate::model::ModelDims;
use crate::training::{FreezePlan, SelectionMetric, TrainPlan, TriStageSchedule};

use super::ExperimentError;

pub const EXPERIMENT_HEADER: &str = "#cs-exp v1";

/// Whether a system is evaluated as trained on monolingual data only or
/// after fine-tuning on the code-switched training split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    NoFt,
    Ft,
}

impl Condition {
    pub const ALL: [Condition; 2] = [Condition::NoFt, Condition::Ft];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::NoFt => "no-ft",
            Condition::Ft => "ft",
        }
    }

    /// Column-header form.
    pub fn label(self) -> &'static str {
        match self {
            Condition::NoFt => "No-FT",
            Condition::Ft => "FT",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "no-ft" => Ok(Condition::NoFt),
            "ft" => Ok(Condition::Ft),
            other => Err(format!("unknown condition `{other}` (expected no-ft or ft)")),
        }
    }
}

/// Where the corpus comes from: generated in the run directory from a
/// configuration, or loaded from a directory written earlier.
#[derive(Debug, Clone, PartialEq)]
pub enum CorpusSource {
    Generate(ToyCorpusConfig),
    Load(PathBuf),
}

/// Model dimensions minus the two the corpus decides (vocabulary size and
/// feature width).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimsSpec {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_enc_layers: usize,
    pub n_dec_layers: usize,
    pub ffn_dim: usize,
    pub bridge_strides: Vec<usize>,
    pub dropout: f64,
}

impl Default for DimsSpec {
    fn default() -> Self {
        DimsSpec {
            d_model: 32,
            n_heads: 4,
            n_enc_layers: 2,
            n_dec_layers: 2,
            ffn_dim: 64,
            bridge_strides: vec![2],
            dropout: 0.1,
        }
    }
}

impl DimsSpec {
    pub fn resolve(&self, vocab: usize, feature_dim: usize) -> ModelDims {
        ModelDims {
            d_model: self.d_model,
            n_heads: self.n_heads,
            n_enc_layers: self.n_enc_layers,
            n_dec_layers: self.n_dec_layers,
            ffn_dim: self.ffn_dim,
            vocab,
            feature_dim,
            bridge_strides: self.bridge_strides.clone(),
            dropout: self.dropout,
        }
    }
}

/// Everything one experiment run needs. `train` drives base training on the
/// monolingual split, `finetune` the code-switched fine-tuning pass and
/// `lid` the language-identification classifier; the `seed` field of each
/// plan is ignored and replaced per cell by sub-seeds fanned out from the
/// run seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub corpus: CorpusSource,
    pub architectures: Vec<ArchitectureKind>,
    pub conditions: Vec<Condition>,
    pub lid_modes: Vec<LidMode>,
    pub seeds: Vec<u64>,
    pub dims: DimsSpec,
    pub train: TrainPlan,
    pub finetune: TrainPlan,
    pub lid: TrainPlan,
    /// How many times each code-switched utterance appears per epoch of
    /// classifier training.
    pub lid_upsample: usize,
    pub decode: DecodeConfig,
    /// Bootstrap resamples per significance test.
    pub resamples: usize,
    pub bootstrap_seed: u64,
    /// Adds character-level columns (CER, CharCut) to the report tables.
    pub expanded: bool,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            corpus: CorpusSource::Generate(ToyCorpusConfig::default()),
            architectures: ArchitectureKind::ALL.to_vec(),
            conditions: Condition::ALL.to_vec(),
            lid_modes: vec![LidMode::Oracle, LidMode::Predicted],
            seeds: vec![0],
            dims: DimsSpec::default(),
            train: TrainPlan::default(),
            finetune: TrainPlan { freeze: FreezePlan::disabled(), ..TrainPlan::default() },
            lid: TrainPlan { freeze: FreezePlan::disabled(), ..TrainPlan::default() },
            lid_upsample: 2,
            decode: DecodeConfig::default(),
            resamples: DEFAULT_RESAMPLES,
            bootstrap_seed: 0,
            expanded: false,
            out_dir: PathBuf::from("run"),
        }
    }
}

fn cfg_err(line: usize, message: impl Into<String>) -> ExperimentError {
    ExperimentError::Config { line, message: message.into() }
}

fn parse_scalar<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, ExperimentError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| cfg_err(line, format!("{key}: {e}")))
}

fn parse_list<T: FromStr>(line: usize, key: &str, value: &str) -> Result<Vec<T>, ExperimentError>
where
    T::Err: fmt::Display,
{
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|item| parse_scalar(line, key, item.trim())).collect()
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool, ExperimentError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(cfg_err(line, format!("{key}: expected true or false, got `{other}`"))),
    }
}

fn parse_lid_mode(line: usize, value: &str) -> Result<LidMode, ExperimentError> {
    match value {
        "oracle" => Ok(LidMode::Oracle),
        "predicted" => Ok(LidMode::Predicted),
        other => {
            Err(cfg_err(line, format!("lid_modes: unknown mode `{other}` (oracle or predicted)")))
        }
    }
}

fn parse_selection(line: usize, key: &str, value: &str) -> Result<SelectionMetric, ExperimentError> {
    match value {
        "dev-loss" => Ok(SelectionMetric::DevLoss),
        "dev-wer" => Ok(SelectionMetric::DevWer),
        other => Err(cfg_err(line, format!("{key}: expected dev-loss or dev-wer, got `{other}`"))),
    }
}

fn selection_str(m: SelectionMetric) -> &'static str {
    match m {
        SelectionMetric::DevLoss => "dev-loss",
        SelectionMetric::DevWer => "dev-wer",
    }
}

/// Applies `train.` / `ft.` / `lid.` keys to a plan. Returns false when the
/// suffix is not a plan key.
fn apply_plan_key(
    plan: &mut TrainPlan,
    line: usize,
    key: &str,
    suffix: &str,
    value: &str,
) -> Result<bool, ExperimentError> {
    match suffix {
        "peak_lr" => plan.schedule.peak_lr = parse_scalar(line, key, value)?,
        "batch_size" => plan.schedule.batch_size = parse_scalar(line, key, value)?,
        "max_steps" => plan.max_steps = parse_scalar(line, key, value)?,
        "eval_every" => plan.eval_every = parse_scalar(line, key, value)?,
        "patience" => plan.early_stop_patience = parse_scalar(line, key, value)?,
        "freeze_updates" => plan.freeze.freeze_steps = parse_scalar(line, key, value)?,
        "w_asr" => plan.weights.w_asr = parse_scalar(line, key, value)?,
        "w_st" => plan.weights.w_st = parse_scalar(line, key, value)?,
        "selection" => plan.selection = parse_selection(line, key, value)?,
        "max_decode_len" => plan.max_decode_len = parse_scalar(line, key, value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

fn plan_lines(out: &mut String, prefix: &str, plan: &TrainPlan) {
    use fmt::Write;
    let _ = writeln!(out, "{prefix}.peak_lr = {}", plan.schedule.peak_lr);
    let _ = writeln!(out, "{prefix}.batch_size = {}", plan.schedule.batch_size);
    let _ = writeln!(out, "{prefix}.max_steps = {}", plan.max_steps);
    let _ = writeln!(out, "{prefix}.eval_every = {}", plan.eval_every);
    let _ = writeln!(out, "{prefix}.patience = {}", plan.early_stop_patience);
    let _ = writeln!(out, "{prefix}.freeze_updates = {}", plan.freeze.freeze_steps);
    let _ = writeln!(out, "{prefix}.w_asr = {}", plan.weights.w_asr);
    let _ = writeln!(out, "{prefix}.w_st = {}", plan.weights.w_st);
    let _ = writeln!(out, "{prefix}.selection = {}", selection_str(plan.selection));
    let _ = writeln!(out, "{prefix}.max_decode_len = {}", plan.max_decode_len);
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<ExperimentConfig, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| super::io_err(path, e))?;
        ExperimentConfig::parse(&text)
    }

    /// Parses the `#cs-exp v1` text form. Unknown and duplicate keys are
    /// errors; keys left out keep their defaults.
    pub fn parse(text: &str) -> Result<ExperimentConfig, ExperimentError> {
        let mut lines = text.lines();
        match lines.next() {
            Some(first) if first.trim_end() == EXPERIMENT_HEADER => {}
            _ => return Err(ExperimentError::MissingHeader(EXPERIMENT_HEADER)),
        }

        let mut cfg = ExperimentConfig::default();
        let mut corpus_cfg = ToyCorpusConfig::default();
        let mut corpus_path: Option<PathBuf> = None;
        let mut corpus_path_line = 0;
        let mut saw_corpus_key = false;
        let mut seen: Vec<String> = Vec::new();

        for (idx, raw) in lines.enumerate() {
            let line = idx + 2;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| cfg_err(line, "expected `key = value`"))?;
            let key = key.trim();
            let value = value.trim();
            if seen.iter().any(|k| k == key) {
                return Err(cfg_err(line, format!("duplicate key `{key}`")));
            }
            seen.push(key.to_string());

            if let Some(suffix) = key.strip_prefix("corpus.") {
                if suffix == "path" {
                    corpus_path = Some(PathBuf::from(value));
                    corpus_path_line = line;
                } else {
                    saw_corpus_key = true;
                    apply_corpus_key(&mut corpus_cfg, line, key, suffix, value)?;
                }
                continue;
            }
            if let Some(suffix) = key.strip_prefix("train.") {
                if apply_plan_key(&mut cfg.train, line, key, suffix, value)? {
                    continue;
                }
                return Err(ExperimentError::UnknownKey { line, key: key.to_string() });
            }
            if let Some(suffix) = key.strip_prefix("ft.") {
                if apply_plan_key(&mut cfg.finetune, line, key, suffix, value)? {
                    continue;
                }
                return Err(ExperimentError::UnknownKey { line, key: key.to_string() });
            }
            if let Some(suffix) = key.strip_prefix("lid.") {
                if suffix == "upsample" {
                    cfg.lid_upsample = parse_scalar(line, key, value)?;
                    continue;
                }
                if apply_plan_key(&mut cfg.lid, line, key, suffix, value)? {
                    continue;
                }
                return Err(ExperimentError::UnknownKey { line, key: key.to_string() });
            }

            match key {
                "architectures" => {
                    cfg.architectures = parse_list(line, key, value)?;
                }
                "conditions" => {
                    cfg.conditions = parse_list(line, key, value)?;
                }
                "lid_modes" => {
                    cfg.lid_modes = if value.is_empty() {
                        Vec::new()
                    } else {
                        value
                            .split(',')
                            .map(|item| parse_lid_mode(line, item.trim()))
                            .collect::<Result<_, _>>()?
                    };
                }
                "seeds" => {
                    cfg.seeds = parse_list(line, key, value)?;
                }
                "model.d_model" => cfg.dims.d_model = parse_scalar(line, key, value)?,
                "model.n_heads" => cfg.dims.n_heads = parse_scalar(line, key, value)?,
                "model.n_enc_layers" => cfg.dims.n_enc_layers = parse_scalar(line, key, value)?,
                "model.n_dec_layers" => cfg.dims.n_dec_layers = parse_scalar(line, key, value)?,
                "model.ffn_dim" => cfg.dims.ffn_dim = parse_scalar(line, key, value)?,
                "model.bridge_strides" => cfg.dims.bridge_strides = parse_list(line, key, value)?,
                "model.dropout" => cfg.dims.dropout = parse_scalar(line, key, value)?,
                "decode.strategy" => {
                    cfg.decode.strategy = match value {
                        "greedy" => DecodeStrategy::Greedy,
                        "beam" => DecodeStrategy::Beam,
                        other => {
                            return Err(cfg_err(
                                line,
                                format!("decode.strategy: expected greedy or beam, got `{other}`"),
                            ))
                        }
                    }
                }
                "decode.beam_size" => cfg.decode.beam_size = parse_scalar(line, key, value)?,
                "decode.max_len" => cfg.decode.max_len = parse_scalar(line, key, value)?,
                "decode.length_penalty" => {
                    cfg.decode.length_penalty = parse_scalar(line, key, value)?
                }
                "report.resamples" => cfg.resamples = parse_scalar(line, key, value)?,
                "report.bootstrap_seed" => cfg.bootstrap_seed = parse_scalar(line, key, value)?,
                "report.expanded" => cfg.expanded = parse_bool(line, key, value)?,
                "out_dir" => cfg.out_dir = PathBuf::from(value),
                _ => return Err(ExperimentError::UnknownKey { line, key: key.to_string() }),
            }
        }

        cfg.corpus = match corpus_path {
            Some(path) => {
                if saw_corpus_key {
                    return Err(cfg_err(
                        corpus_path_line,
                        "corpus.path excludes the corpus generation keys",
                    ));
                }
                CorpusSource::Load(path)
            }
            None => CorpusSource::Generate(corpus_cfg),
        };
        Ok(cfg)
    }

    /// Canonical text form; `parse` of the result reproduces the config.
    pub fn render(&self) -> String {
        use fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "{EXPERIMENT_HEADER}");
        match &self.corpus {
            CorpusSource::Load(path) => {
                let _ = writeln!(out, "corpus.path = {}", path.display());
            }
            CorpusSource::Generate(c) => {
                let _ = writeln!(out, "corpus.vocab_size_per_lang = {}", c.vocab_size_per_lang);
                let _ = writeln!(out, "corpus.word_len = {}", c.word_len);
                let _ = writeln!(out, "corpus.phoneme_dim = {}", c.phoneme_dim);
                let _ = writeln!(out, "corpus.noise_sigma = {}", c.noise_sigma);
                let _ = writeln!(out, "corpus.cs_rate = {}", c.cs_rate);
                let _ = writeln!(out, "corpus.max_cs_proportion = {}", c.max_cs_proportion);
                let _ = writeln!(out, "corpus.sentence_len_min = {}", c.sentence_len_range.0);
                let _ = writeln!(out, "corpus.sentence_len_max = {}", c.sentence_len_range.1);
                let _ = writeln!(out, "corpus.stretch_min = {}", c.stretch_range.0);
                let _ = writeln!(out, "corpus.stretch_max = {}", c.stretch_range.1);
                let _ = writeln!(out, "corpus.train_mono = {}", c.sizes.train_mono);
                let _ = writeln!(out, "corpus.train_cs = {}", c.sizes.train_cs);
                let _ = writeln!(out, "corpus.dev_cs = {}", c.sizes.dev_cs);
                let _ = writeln!(out, "corpus.test_cs = {}", c.sizes.test_cs);
                let _ = writeln!(out, "corpus.test_mono = {}", c.sizes.test_mono);
                let _ = writeln!(out, "corpus.seed = {}", c.seed);
            }
        }
        let archs: Vec<&str> = self.architectures.iter().map(|a| a.as_str()).collect();
        let _ = writeln!(out, "architectures = {}", archs.join(","));
        let conds: Vec<&str> = self.conditions.iter().map(|c| c.as_str()).collect();
        let _ = writeln!(out, "conditions = {}", conds.join(","));
        let modes: Vec<&str> = self
            .lid_modes
            .iter()
            .map(|m| match m {
                LidMode::Oracle => "oracle",
                LidMode::Predicted => "predicted",
            })
            .collect();
        let _ = writeln!(out, "lid_modes = {}", modes.join(","));
        let seeds: Vec<String> = self.seeds.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(out, "seeds = {}", seeds.join(","));
        let _ = writeln!(out, "model.d_model = {}", self.dims.d_model);
        let _ = writeln!(out, "model.n_heads = {}", self.dims.n_heads);
        let _ = writeln!(out, "model.n_enc_layers = {}", self.dims.n_enc_layers);
        let _ = writeln!(out, "model.n_dec_layers = {}", self.dims.n_dec_layers);
        let _ = writeln!(out, "model.ffn_dim = {}", self.dims.ffn_dim);
        let strides: Vec<String> = self.dims.bridge_strides.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(out, "model.bridge_strides = {}", strides.join(","));
        let _ = writeln!(out, "model.dropout = {}", self.dims.dropout);
        plan_lines(&mut out, "train", &self.train);
        plan_lines(&mut out, "ft", &self.finetune);
        plan_lines(&mut out, "lid", &self.lid);
        let _ = writeln!(out, "lid.upsample = {}", self.lid_upsample);
        let strategy = match self.decode.strategy {
            DecodeStrategy::Greedy => "greedy",
            DecodeStrategy::Beam => "beam",
        };
        let _ = writeln!(out, "decode.strategy = {strategy}");
        let _ = writeln!(out, "decode.beam_size = {}", self.decode.beam_size);
        let _ = writeln!(out, "decode.max_len = {}", self.decode.max_len);
        let _ = writeln!(out, "decode.length_penalty = {}", self.decode.length_penalty);
        let _ = writeln!(out, "report.resamples = {}", self.resamples);
        let _ = writeln!(out, "report.bootstrap_seed = {}", self.bootstrap_seed);
        let _ = writeln!(out, "report.expanded = {}", self.expanded);
        let _ = writeln!(out, "out_dir = {}", self.out_dir.display());
        out
    }

    /// True when some requested architecture routes through the classifier
    /// and predicted routing was asked for.
    pub fn needs_lid_training(&self) -> bool {
        self.architectures.iter().any(|a| a.uses_lid())
            && self.lid_modes.contains(&LidMode::Predicted)
    }

    /// Checks the whole run before anything starts: list contents, plan
    /// and decode settings, and that a referenced corpus actually exists.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        fn no_dups<T: PartialEq + fmt::Debug>(
            items: &[T],
            what: &str,
        ) -> Result<(), ExperimentError> {
            if items.is_empty() {
                return Err(ExperimentError::Invalid(format!("{what} must not be empty")));
            }
            for (i, item) in items.iter().enumerate() {
                if items[..i].contains(item) {
                    return Err(ExperimentError::Invalid(format!(
                        "{what} lists {item:?} twice"
                    )));
                }
            }
            Ok(())
        }
        no_dups(&self.architectures, "architectures")?;
        no_dups(&self.conditions, "conditions")?;
        no_dups(&self.seeds, "seeds")?;
        if self.architectures.iter().any(|a| a.uses_lid()) && self.lid_modes.is_empty() {
            return Err(ExperimentError::Invalid(
                "classifier-gated architectures need at least one entry in lid_modes".into(),
            ));
        }
        if !self.lid_modes.is_empty() {
            no_dups(&self.lid_modes, "lid_modes")?;
        }
        match &self.corpus {
            CorpusSource::Generate(c) => c.validate()?,
            CorpusSource::Load(path) => {
                if !path.join("manifest.json").is_file() {
                    return Err(ExperimentError::Invalid(format!(
                        "corpus.path {} has no manifest.json",
                        path.display()
                    )));
                }
            }
        }
        self.train.validate()?;
        if self.conditions.contains(&Condition::Ft) {
            self.finetune.validate()?;
        }
        if self.needs_lid_training() {
            self.lid.validate()?;
            if self.lid_upsample == 0 {
                return Err(ExperimentError::Invalid("lid.upsample must be at least 1".into()));
            }
        }
        self.decode.validate()?;
        if self.resamples == 0 {
            return Err(ExperimentError::Invalid("report.resamples must be at least 1".into()));
        }
        Ok(())
    }

    /// Conditions in canonical table order (No-FT before FT) regardless of
    /// how the config listed them.
    pub fn ordered_conditions(&self) -> Vec<Condition> {
        Condition::ALL.iter().copied().filter(|c| self.conditions.contains(c)).collect()
    }
}

fn apply_corpus_key(
    c: &mut ToyCorpusConfig,
    line: usize,
    key: &str,
    suffix: &str,
    value: &str,
) -> Result<(), ExperimentError> {
    match suffix {
        "vocab_size_per_lang" => c.vocab_size_per_lang = parse_scalar(line, key, value)?,
        "word_len" => c.word_len = parse_scalar(line, key, value)?,
        "phoneme_dim" => c.phoneme_dim = parse_scalar(line, key, value)?,
        "noise_sigma" => c.noise_sigma = parse_scalar(line, key, value)?,
        "cs_rate" => c.cs_rate = parse_scalar(line, key, value)?,
        "max_cs_proportion" => c.max_cs_proportion = parse_scalar(line, key, value)?,
        "sentence_len_min" => c.sentence_len_range.0 = parse_scalar(line, key, value)?,
        "sentence_len_max" => c.sentence_len_range.1 = parse_scalar(line, key, value)?,
        "stretch_min" => c.stretch_range.0 = parse_scalar(line, key, value)?,
        "stretch_max" => c.stretch_range.1 = parse_scalar(line, key, value)?,
        "train_mono" => c.sizes.train_mono = parse_scalar(line, key, value)?,
        "train_cs" => c.sizes.train_cs = parse_scalar(line, key, value)?,
        "dev_cs" => c.sizes.dev_cs = parse_scalar(line, key, value)?,
        "test_cs" => c.sizes.test_cs = parse_scalar(line, key, value)?,
        "test_mono" => c.sizes.test_mono = parse_scalar(line, key, value)?,
        "seed" => c.seed = parse_scalar(line, key, value)?,
        _ => return Err(ExperimentError::UnknownKey { line, key: key.to_string() }),
    }
    Ok(())
}

/// A small configuration that exercises every stage in seconds, for smoke
/// tests and examples.
pub fn smoke_config(out_dir: &Path) -> ExperimentConfig {
    let corpus = ToyCorpusConfig {
        vocab_size_per_lang: 6,
        phoneme_dim: 5,
        sentence_len_range: (3, 5),
        stretch_range: (1, 1),
        sizes: SplitSizes { train_mono: 16, train_cs: 10, dev_cs: 6, test_cs: 8, test_mono: 6 },
        seed: 11,
        ..ToyCorpusConfig::default()
    };
    let plan = TrainPlan {
        schedule: TriStageSchedule::new(1e-3, 4),
        freeze: FreezePlan::disabled(),
        max_steps: 2,
        eval_every: 2,
        early_stop_patience: 0,
        max_decode_len: 12,
        ..TrainPlan::default()
    };
    ExperimentConfig {
        corpus: CorpusSource::Generate(corpus),
        architectures: vec![ArchitectureKind::E2EBidirectShared],
        conditions: vec![Condition::NoFt],
        lid_modes: vec![LidMode::Oracle, LidMode::Predicted],
        seeds: vec![0],
        dims: DimsSpec {
            d_model: 8,
            n_heads: 2,
            n_enc_layers: 1,
            n_dec_layers: 1,
            ffn_dim: 16,
            bridge_strides: vec![2],
            dropout: 0.0,
        },
        train: plan.clone(),
        finetune: plan.clone(),
        lid: plan,
        lid_upsample: 2,
        decode: DecodeConfig { max_len: 12, ..DecodeConfig::default() },
        resamples: 200,
        bootstrap_seed: 0,
        expanded: false,
        out_dir: out_dir.to_path_buf(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_text() {
        let cfg = ExperimentConfig::default();
        let text = cfg.render();
        let parsed = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(parsed, cfg);
        assert_eq!(parsed.render(), text);
    }

    #[test]
    fn smoke_config_round_trips_and_validates() {
        let cfg = smoke_config(Path::new("out"));
        let parsed = ExperimentConfig::parse(&cfg.render()).unwrap();
        assert_eq!(parsed, cfg);
        cfg.validate().unwrap();
    }

    #[test]
    fn header_is_required() {
        let err = ExperimentConfig::parse("seeds = 1\n").unwrap_err();
        assert!(matches!(err, ExperimentError::MissingHeader(EXPERIMENT_HEADER)));
        let err = ExperimentConfig::parse("#cs-exp v2\nseeds = 1\n").unwrap_err();
        assert!(matches!(err, ExperimentError::MissingHeader(_)));
    }

    #[test]
    fn unknown_and_duplicate_keys_are_rejected_with_line_numbers() {
        let err = ExperimentConfig::parse("#cs-exp v1\n\nwat = 3\n").unwrap_err();
        match err {
            ExperimentError::UnknownKey { line, key } => {
                assert_eq!(line, 3);
                assert_eq!(key, "wat");
            }
            other => panic!("unexpected: {other}"),
        }
        let err = ExperimentConfig::parse("#cs-exp v1\nseeds = 1\nseeds = 2\n").unwrap_err();
        match err {
            ExperimentError::Config { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("duplicate"), "{message}");
            }
            other => panic!("unexpected: {other}"),
        }
        let err = ExperimentConfig::parse("#cs-exp v1\ntrain.warmup = 3\n").unwrap_err();
        assert!(matches!(err, ExperimentError::UnknownKey { line: 2, .. }));
    }

    #[test]
    fn malformed_lines_and_values_name_their_line() {
        let err = ExperimentConfig::parse("#cs-exp v1\njust words\n").unwrap_err();
        assert!(matches!(err, ExperimentError::Config { line: 2, .. }));
        let err = ExperimentConfig::parse("#cs-exp v1\nmodel.d_model = tiny\n").unwrap_err();
        assert!(matches!(err, ExperimentError::Config { line: 2, .. }));
        let err =
            ExperimentConfig::parse("#cs-exp v1\narchitectures = cascade-tridirect\n").unwrap_err();
        assert!(matches!(err, ExperimentError::Config { line: 2, .. }));
    }

    #[test]
    fn corpus_path_excludes_generation_keys() {
        let err = ExperimentConfig::parse("#cs-exp v1\ncorpus.path = d\ncorpus.seed = 4\n")
            .unwrap_err();
        match err {
            ExperimentError::Config { message, .. } => {
                assert!(message.contains("corpus.path"), "{message}")
            }
            other => panic!("unexpected: {other}"),
        }
        let cfg = ExperimentConfig::parse("#cs-exp v1\ncorpus.path = some/dir\n").unwrap();
        assert_eq!(cfg.corpus, CorpusSource::Load(PathBuf::from("some/dir")));
    }

    #[test]
    fn lists_parse_and_comments_are_skipped() {
        let text = "#cs-exp v1\n# a comment\narchitectures = e2e-unidirect, cascade-bidirect\n\
                    seeds = 3, 5, 8\nconditions = ft\nlid_modes = oracle\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(
            cfg.architectures,
            vec![ArchitectureKind::E2EUnidirect, ArchitectureKind::CascadeBidirect]
        );
        assert_eq!(cfg.seeds, vec![3, 5, 8]);
        assert_eq!(cfg.conditions, vec![Condition::Ft]);
        assert_eq!(cfg.lid_modes, vec![LidMode::Oracle]);
    }

    #[test]
    fn validation_rejects_bad_lists() {
        let mut cfg = smoke_config(Path::new("out"));
        cfg.architectures.clear();
        assert!(matches!(cfg.validate(), Err(ExperimentError::Invalid(_))));

        let mut cfg = smoke_config(Path::new("out"));
        cfg.seeds = vec![1, 1];
        assert!(matches!(cfg.validate(), Err(ExperimentError::Invalid(_))));

        let mut cfg = smoke_config(Path::new("out"));
        cfg.architectures = vec![ArchitectureKind::CascadeUnidirect];
        cfg.lid_modes.clear();
        let err = cfg.validate().unwrap_err();
        match err {
            ExperimentError::Invalid(msg) => assert!(msg.contains("lid_modes"), "{msg}"),
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn validation_covers_nested_settings() {
        let mut cfg = smoke_config(Path::new("out"));
        cfg.decode.beam_size = 0;
        assert!(cfg.validate().is_err());

        let mut cfg = smoke_config(Path::new("out"));
        cfg.train.eval_every = 0;
        assert!(cfg.validate().is_err());

        let mut cfg = smoke_config(Path::new("out"));
        cfg.resamples = 0;
        assert!(cfg.validate().is_err());

        let mut cfg = smoke_config(Path::new("out"));
        cfg.corpus = CorpusSource::Load(PathBuf::from("/definitely/not/here"));
        assert!(matches!(cfg.validate(), Err(ExperimentError::Invalid(_))));
    }

    #[test]
    fn finetune_plan_checked_only_when_finetuning_runs() {
        let mut cfg = smoke_config(Path::new("out"));
        cfg.finetune.eval_every = 0;
        cfg.conditions = vec![Condition::NoFt];
        cfg.validate().unwrap();
        cfg.conditions = vec![Condition::NoFt, Condition::Ft];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn ordered_conditions_are_canonical() {
        let mut cfg = smoke_config(Path::new("out"));
        cfg.conditions = vec![Condition::Ft, Condition::NoFt];
        assert_eq!(cfg.ordered_conditions(), vec![Condition::NoFt, Condition::Ft]);
    }

    #[test]
    fn expanded_flag_parses_as_bool() {
        let cfg = ExperimentConfig::parse("#cs-exp v1\nreport.expanded = true\n").unwrap();
        assert!(cfg.expanded);
        let err = ExperimentConfig::parse("#cs-exp v1\nreport.expanded = yes\n").unwrap_err();
        assert!(matches!(err, ExperimentError::Config { line: 2, .. }));
    }
}
