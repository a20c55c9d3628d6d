//! Training loops.
//!
//! `train` runs the base recipe on any of the seven layouts: cascade kinds
//! optimize each component on its own objective (recognition loss plus
//! translation-from-gold-text loss, over disjoint parameters), end-to-end
//! kinds optimize the weighted two-pass joint loss. `finetune` reseats a
//! checkpoint and continues on code-switched data with early stopping.
//! `train_lid` fits the standalone language identifier on the upsampled
//! mixture. `warmstart_ablation` pairs a pretrain-then-finetune run against
//! a cold start on the same code-switched data.
//!
//! All loops are deterministic per seed: batch order, dropout masks, and
//! evaluation points derive from the plan's seed alone, and two runs with
//! equal inputs produce identical traces and parameter hashes.

use serde::{Deserialize, Serialize};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::toy::SPLIT_DEV_CS;
use crate::inference::{decode_transcript_sequence, DecodeConfig, DecodeStrategy};
use crate::metrics::edit::{corpus_rate, wer_stat, EditStat};
use crate::model::dims::ArchitectureKind;
use crate::model::vocab::{decoder_target, EOS, PAD};
use crate::model::{
    Dropout, JointWeights, LidModel, ModelDims, PreparedExample, System, Vocab,
};
use crate::nn::tape::{Tape, Var};
use crate::util::sub_seed;

use super::batching::assemble_batches;
use super::checkpoint::{Checkpoint, CheckpointKind};
use super::optimizer::{Adam, AdamConfig};
use super::schedule::{lr_at, FreezePlan, TriStageSchedule};
use super::trace::TraceRecord;
use super::TrainingError;

/// Which dev quantity picks the returned checkpoint. Both are
/// lower-is-better.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMetric {
    DevLoss,
    DevWer,
}

/// One training run, fully specified. The batch size lives on the schedule
/// (it controls the step-count scaling) and is the batch size of the loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainPlan {
    pub schedule: TriStageSchedule,
    pub freeze: FreezePlan,
    pub max_steps: usize,
    pub eval_every: usize,
    /// Consecutive non-improving evaluations tolerated before stopping;
    /// zero disables early stopping.
    pub early_stop_patience: usize,
    pub seed: u64,
    pub weights: JointWeights,
    pub selection: SelectionMetric,
    /// Generation budget for dev decoding and non-teacher-forced passes.
    pub max_decode_len: usize,
}

impl Default for TrainPlan {
    fn default() -> TrainPlan {
        TrainPlan {
            schedule: TriStageSchedule::default(),
            freeze: FreezePlan::for_batch(64),
            max_steps: 3000,
            eval_every: 100,
            early_stop_patience: 5,
            seed: 0,
            weights: JointWeights::default(),
            selection: SelectionMetric::DevLoss,
            max_decode_len: 24,
        }
    }
}

impl TrainPlan {
    pub fn validate(&self) -> Result<(), TrainingError> {
        self.schedule.validate()?;
        if self.eval_every == 0 {
            return Err(TrainingError::InvalidPlan("eval_every must be at least 1".into()));
        }
        if self.max_steps > 0 && self.eval_every > self.max_steps {
            return Err(TrainingError::InvalidPlan(format!(
                "eval_every {} exceeds max_steps {}",
                self.eval_every, self.max_steps
            )));
        }
        if self.max_decode_len == 0 {
            return Err(TrainingError::InvalidPlan("max_decode_len must be at least 1".into()));
        }
        if !(self.freeze.freeze_steps.is_finite() && self.freeze.freeze_steps >= 0.0) {
            return Err(TrainingError::InvalidPlan(
                "freeze_steps must be finite and non-negative".into(),
            ));
        }
        for (label, w) in [("w_asr", self.weights.w_asr), ("w_st", self.weights.w_st)] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(TrainingError::InvalidPlan(format!(
                    "loss weight {label} must be finite and non-negative, got {w}"
                )));
            }
        }
        Ok(())
    }

    fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    NewBest,
    Continue,
    Stop,
}

/// Tracks the running best dev metric; because a checkpoint is snapshotted
/// exactly on `NewBest`, the returned model can never be worse than any
/// evaluated one.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    best: f64,
    since_best: usize,
    patience: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> EarlyStopper {
        EarlyStopper { best: f64::INFINITY, since_best: 0, patience }
    }

    pub fn observe(&mut self, value: f64) -> StopDecision {
        if value < self.best {
            self.best = value;
            self.since_best = 0;
            StopDecision::NewBest
        } else {
            self.since_best += 1;
            if self.patience > 0 && self.since_best >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

/// Result of one training run: the selected checkpoint plus the full
/// evaluation trace (callers persist it to disk if wanted).
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub best_step: u64,
    pub best_metric: f64,
    pub trace: Vec<TraceRecord>,
}

fn example_loss(
    system: &System,
    tape: &mut Tape,
    ex: &PreparedExample,
    plan: &TrainPlan,
    drop: &mut Dropout,
) -> Result<Var, TrainingError> {
    // Language-gated sub-models are trained with gold routing; for layouts
    // that share (or alias) everything across languages the route is a
    // no-op, so one code path covers all seven kinds.
    let route = ex.matrix_lang;
    if system.kind.is_cascade() {
        let asr = system.asr_loss(tape, ex, route, drop)?;
        let mt = system.mt_loss(tape, ex, route, drop)?;
        Ok(tape.add(asr, mt))
    } else {
        let fwd = system.forward_joint(
            tape,
            ex,
            route,
            plan.weights,
            true,
            plan.max_decode_len,
            drop,
        )?;
        Ok(fwd.total_loss)
    }
}

fn batch_dropout(rate: f64, rng: &mut ChaCha8Rng) -> Dropout {
    // The seed is drawn even when dropout is off so that toggling the rate
    // does not reshuffle every other seeded choice of the run.
    let seed = rng.next_u64();
    if rate > 0.0 {
        Dropout::new(rate, seed)
    } else {
        Dropout::disabled()
    }
}

fn train_step(
    system: &mut System,
    examples: &[PreparedExample],
    batch: &[usize],
    plan: &TrainPlan,
    step: u64,
    adam: &mut Adam,
    rng: &mut ChaCha8Rng,
) -> Result<f64, TrainingError> {
    let mut tape = Tape::new();
    let mut drop = batch_dropout(system.dims.dropout, rng);
    let mut total: Option<Var> = None;
    for &i in batch {
        let loss = example_loss(system, &mut tape, &examples[i], plan, &mut drop)?;
        total = Some(match total {
            Some(t) => tape.add(t, loss),
            None => loss,
        });
    }
    let mean = tape.scale(total.expect("batches are nonempty"), 1.0 / batch.len() as f64);
    let value = tape.scalar(mean);
    if !value.is_finite() {
        return Err(TrainingError::Diverged { step, value });
    }
    system.store.zero_grads();
    tape.backward(mean, &mut system.store);
    let lr = lr_at(step as usize, &plan.schedule);
    adam.step(&mut system.store, lr, |_, name| plan.freeze.trainable(step as usize, name));
    Ok(value)
}

fn dev_loss(
    system: &System,
    dev: &[PreparedExample],
    plan: &TrainPlan,
) -> Result<f64, TrainingError> {
    let mut sum = 0.0;
    for ex in dev {
        let mut tape = Tape::eval();
        let mut drop = Dropout::disabled();
        let loss = example_loss(system, &mut tape, ex, plan, &mut drop)?;
        sum += tape.scalar(loss);
    }
    Ok(sum / dev.len() as f64)
}

fn dev_decode_config(plan: &TrainPlan) -> DecodeConfig {
    DecodeConfig {
        strategy: DecodeStrategy::Greedy,
        max_len: plan.max_decode_len,
        ..DecodeConfig::default()
    }
}

fn dev_wer(
    system: &System,
    dev: &[PreparedExample],
    plan: &TrainPlan,
) -> Result<f64, TrainingError> {
    let cfg = dev_decode_config(plan);
    let mut stats: Vec<EditStat> = Vec::with_capacity(dev.len());
    for ex in dev {
        let decoded = decode_transcript_sequence(system, ex.matrix_lang, &ex.features, &cfg);
        let hyp = system.vocab.words_to_text(&decoded.tokens);
        let reference = system.vocab.words_to_text(&ex.transcript_ids);
        stats.push(wer_stat(&hyp, &reference)?);
    }
    Ok(corpus_rate(&stats)?)
}

fn evaluate(
    system: &System,
    dev: &[PreparedExample],
    plan: &TrainPlan,
    step: u64,
    split: &str,
    trace: &mut Vec<TraceRecord>,
) -> Result<f64, TrainingError> {
    let loss = dev_loss(system, dev, plan)?;
    trace.push(TraceRecord::new(step, split, "loss", loss));
    match plan.selection {
        SelectionMetric::DevLoss => Ok(loss),
        SelectionMetric::DevWer => {
            let wer = dev_wer(system, dev, plan)?;
            trace.push(TraceRecord::new(step, split, "wer", wer));
            Ok(wer)
        }
    }
}

/// Optimizes `system` in place and returns the best checkpoint seen on
/// `dev_examples`. The first evaluation happens before any update, so with
/// `max_steps` zero (or a dev metric that only worsens) the initialization
/// itself is returned.
pub fn train(
    system: &mut System,
    train_examples: &[PreparedExample],
    dev_examples: &[PreparedExample],
    plan: &TrainPlan,
    dev_split: &str,
) -> Result<TrainOutcome, TrainingError> {
    plan.validate()?;
    if train_examples.is_empty() {
        return Err(TrainingError::EmptyDataset("training split"));
    }
    if dev_examples.is_empty() {
        return Err(TrainingError::EmptyDataset("dev split"));
    }
    let config = plan.snapshot();
    let mut adam = Adam::new(AdamConfig::default(), &system.store);
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(plan.seed, "train-loop"));
    let mut trace = Vec::new();
    let mut stopper = EarlyStopper::new(plan.early_stop_patience);

    let initial = evaluate(system, dev_examples, plan, 0, dev_split, &mut trace)?;
    stopper.observe(initial);
    let mut best = Checkpoint::of_system(system, 0, Some(&adam), &rng, config.clone());
    let mut best_step = 0u64;
    let mut best_metric = initial;

    let mut step = 0u64;
    let mut window_loss = 0.0;
    let mut window_count = 0usize;
    'run: for epoch in 0u64.. {
        let order_seed = sub_seed(plan.seed, &format!("epoch{epoch}"));
        let batches =
            assemble_batches(train_examples, plan.schedule.batch_size, order_seed)?;
        for batch in &batches {
            if step >= plan.max_steps as u64 {
                break 'run;
            }
            step += 1;
            let loss = train_step(system, train_examples, batch, plan, step, &mut adam, &mut rng)?;
            window_loss += loss;
            window_count += 1;
            let due = step % plan.eval_every as u64 == 0 || step == plan.max_steps as u64;
            if !due {
                continue;
            }
            trace.push(TraceRecord::new(step, "train", "loss", window_loss / window_count as f64));
            window_loss = 0.0;
            window_count = 0;
            let metric = evaluate(system, dev_examples, plan, step, dev_split, &mut trace)?;
            match stopper.observe(metric) {
                StopDecision::NewBest => {
                    best = Checkpoint::of_system(system, step, Some(&adam), &rng, config.clone());
                    best_step = step;
                    best_metric = metric;
                }
                StopDecision::Continue => {}
                StopDecision::Stop => break 'run,
            }
        }
    }
    Ok(TrainOutcome { best, best_step, best_metric, trace })
}

/// Continues a saved system on code-switched data, early-stopping on the
/// code-switched dev set. Optimizer state and schedule restart fresh: the
/// moments in the checkpoint serve resumption of the *same* run, not a new
/// stage.
pub fn finetune(
    ckpt: &Checkpoint,
    expected: ArchitectureKind,
    cs_train: &[PreparedExample],
    cs_dev: &[PreparedExample],
    plan: &TrainPlan,
) -> Result<TrainOutcome, TrainingError> {
    if ckpt.kind != CheckpointKind::System(expected) {
        return Err(TrainingError::KindMismatch {
            expected: expected.as_str().to_string(),
            found: ckpt.kind.to_string(),
        });
    }
    let (mut system, _) = ckpt.restore_system()?;
    train(&mut system, cs_train, cs_dev, plan, SPLIT_DEV_CS)
}

/// One epoch of the language-identification mixture as (source, index)
/// pairs, where source 0 is the code-switched set and source `s + 1` is
/// `mono_lens[s]`. Every code-switched example appears exactly
/// `upsample_cs` times and every other source is sized to twice the
/// code-switched set (sampled without replacement when it is large enough,
/// topped up with replacement otherwise). With no code-switched data the
/// mixture is simply every other source in full.
pub fn lid_epoch_mixture(
    cs_len: usize,
    mono_lens: &[usize],
    upsample_cs: usize,
    seed: u64,
) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mixture: Vec<(usize, usize)> = Vec::new();
    if cs_len == 0 {
        for (s, &len) in mono_lens.iter().enumerate() {
            mixture.extend((0..len).map(|i| (s + 1, i)));
        }
    } else {
        for i in 0..cs_len {
            mixture.extend(std::iter::repeat((0usize, i)).take(upsample_cs));
        }
        let target = 2 * cs_len;
        for (s, &len) in mono_lens.iter().enumerate() {
            if len == 0 {
                continue;
            }
            let mut indices: Vec<usize> = (0..len).collect();
            shuffle(&mut indices, &mut rng);
            if len >= target {
                indices.truncate(target);
            } else {
                while indices.len() < target {
                    indices.push(rng.next_u64() as usize % len);
                }
            }
            mixture.extend(indices.into_iter().map(|i| (s + 1, i)));
        }
    }
    shuffle(&mut mixture, &mut rng);
    mixture
}

fn shuffle<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    use rand::seq::SliceRandom;
    items.shuffle(rng);
}

/// Fraction of `dev` whose predicted language matches the labeled matrix
/// language.
pub fn lid_accuracy(lid: &LidModel, dev: &[PreparedExample]) -> f64 {
    if dev.is_empty() {
        return 0.0;
    }
    let hits = dev
        .iter()
        .filter(|ex| lid.predict(&ex.features).0 == ex.matrix_lang)
        .count();
    hits as f64 / dev.len() as f64
}

fn lid_dev_loss(lid: &LidModel, dev: &[PreparedExample]) -> f64 {
    let mut sum = 0.0;
    for ex in dev {
        let mut tape = Tape::eval();
        let mut drop = Dropout::disabled();
        let loss = lid.loss(&mut tape, &ex.features, ex.matrix_lang, &mut drop);
        sum += tape.scalar(loss);
    }
    sum / dev.len() as f64
}

/// Trains the standalone language identifier on the upsampled mixture.
/// Selection is always dev loss (there is no transcript to score), the
/// freeze plan is ignored (its exempt groups name no classifier tensors),
/// and accuracy is logged alongside loss at every evaluation.
pub fn train_lid(
    lid: &mut LidModel,
    cs: &[PreparedExample],
    mono_sources: &[&[PreparedExample]],
    upsample_cs: usize,
    dev: &[PreparedExample],
    plan: &TrainPlan,
) -> Result<TrainOutcome, TrainingError> {
    plan.validate()?;
    if dev.is_empty() {
        return Err(TrainingError::EmptyDataset("lid dev split"));
    }
    let total: usize = cs.len() + mono_sources.iter().map(|s| s.len()).sum::<usize>();
    if total == 0 {
        return Err(TrainingError::EmptyDataset("lid training mixture"));
    }
    let mut seen = std::collections::BTreeSet::new();
    for ex in cs.iter().chain(mono_sources.iter().flat_map(|s| s.iter())) {
        seen.insert(ex.matrix_lang);
    }
    if seen.len() < 2 {
        return Err(TrainingError::SingleClassLid);
    }

    let config = plan.snapshot();
    let mono_lens: Vec<usize> = mono_sources.iter().map(|s| s.len()).collect();
    let resolve = |&(source, index): &(usize, usize)| -> &PreparedExample {
        if source == 0 {
            &cs[index]
        } else {
            &mono_sources[source - 1][index]
        }
    };
    let mut adam = Adam::new(AdamConfig::default(), &lid.store);
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(plan.seed, "lid-loop"));
    let mut trace = Vec::new();
    let mut stopper = EarlyStopper::new(plan.early_stop_patience);

    let eval_lid = |lid: &LidModel, step: u64, trace: &mut Vec<TraceRecord>| -> f64 {
        let loss = lid_dev_loss(lid, dev);
        trace.push(TraceRecord::new(step, SPLIT_DEV_CS, "loss", loss));
        trace.push(TraceRecord::new(step, SPLIT_DEV_CS, "accuracy", lid_accuracy(lid, dev)));
        loss
    };
    let initial = eval_lid(lid, 0, &mut trace);
    stopper.observe(initial);
    let mut best = Checkpoint::of_lid(lid, 0, Some(&adam), &rng, config.clone());
    let mut best_step = 0u64;
    let mut best_metric = initial;

    let mut step = 0u64;
    let mut window_loss = 0.0;
    let mut window_count = 0usize;
    'run: for epoch in 0u64.. {
        let mixture = lid_epoch_mixture(
            cs.len(),
            &mono_lens,
            upsample_cs,
            sub_seed(plan.seed, &format!("lid-epoch{epoch}")),
        );
        for batch in mixture.chunks(plan.schedule.batch_size) {
            if step >= plan.max_steps as u64 {
                break 'run;
            }
            step += 1;
            let mut tape = Tape::new();
            let mut drop = batch_dropout(lid.dims.dropout, &mut rng);
            let mut total: Option<Var> = None;
            for pair in batch {
                let ex = resolve(pair);
                let loss = lid.loss(&mut tape, &ex.features, ex.matrix_lang, &mut drop);
                total = Some(match total {
                    Some(t) => tape.add(t, loss),
                    None => loss,
                });
            }
            let mean =
                tape.scale(total.expect("mixture batches are nonempty"), 1.0 / batch.len() as f64);
            let value = tape.scalar(mean);
            if !value.is_finite() {
                return Err(TrainingError::Diverged { step, value });
            }
            lid.store.zero_grads();
            tape.backward(mean, &mut lid.store);
            let lr = lr_at(step as usize, &plan.schedule);
            adam.step(&mut lid.store, lr, |_, _| true);
            window_loss += value;
            window_count += 1;
            let due = step % plan.eval_every as u64 == 0 || step == plan.max_steps as u64;
            if !due {
                continue;
            }
            trace.push(TraceRecord::new(step, "train", "loss", window_loss / window_count as f64));
            window_loss = 0.0;
            window_count = 0;
            let metric = eval_lid(lid, step, &mut trace);
            match stopper.observe(metric) {
                StopDecision::NewBest => {
                    best = Checkpoint::of_lid(lid, step, Some(&adam), &rng, config.clone());
                    best_step = step;
                    best_metric = metric;
                }
                StopDecision::Continue => {}
                StopDecision::Stop => break 'run,
            }
        }
    }
    Ok(TrainOutcome { best, best_step, best_metric, trace })
}

#[derive(Debug)]
pub struct WarmstartOutcome {
    pub warm: TrainOutcome,
    pub cold: TrainOutcome,
}

/// Pairs a pretrain-then-finetune run (warm) against training on the
/// code-switched data from random initialization (cold). Both finetune
/// stages run the same plan, so with equal seeds they see identical batch
/// sequences over `cs_train`.
pub fn warmstart_ablation(
    kind: ArchitectureKind,
    dims: &ModelDims,
    vocab: &Vocab,
    mono_train: &[PreparedExample],
    cs_train: &[PreparedExample],
    cs_dev: &[PreparedExample],
    base_plan: &TrainPlan,
    ft_plan: &TrainPlan,
) -> Result<WarmstartOutcome, TrainingError> {
    let mut warm_system = System::build(
        kind,
        dims.clone(),
        vocab.clone(),
        sub_seed(base_plan.seed, "warm-init"),
    )?;
    let base = train(&mut warm_system, mono_train, cs_dev, base_plan, SPLIT_DEV_CS)?;
    let warm = finetune(&base.best, kind, cs_train, cs_dev, ft_plan)?;
    let mut cold_system = System::build(
        kind,
        dims.clone(),
        vocab.clone(),
        sub_seed(base_plan.seed, "cold-init"),
    )?;
    let cold = train(&mut cold_system, cs_train, cs_dev, ft_plan, SPLIT_DEV_CS)?;
    Ok(WarmstartOutcome { warm, cold })
}

/// Position-wise accuracy of greedy transcripts against the gold decoder
/// targets (language token, words, end marker). The shared target framing
/// makes this directly comparable to [`most_frequent_token_accuracy`].
pub fn transcript_token_accuracy(
    system: &System,
    examples: &[PreparedExample],
    max_len: usize,
) -> f64 {
    let cfg = DecodeConfig {
        strategy: DecodeStrategy::Greedy,
        max_len,
        ..DecodeConfig::default()
    };
    let mut hits = 0usize;
    let mut total = 0usize;
    for ex in examples {
        let target = decoder_target(ex.transcript_lang, &ex.transcript_ids);
        let decoded = decode_transcript_sequence(system, ex.matrix_lang, &ex.features, &cfg);
        let mut predicted = decoded.tokens.clone();
        if !decoded.truncated {
            predicted.push(EOS);
        }
        for (pos, &gold) in target.iter().enumerate() {
            let got = predicted.get(pos).copied().unwrap_or(PAD);
            if got == gold {
                hits += 1;
            }
        }
        total += target.len();
    }
    if total == 0 {
        return 0.0;
    }
    hits as f64 / total as f64
}

/// Accuracy of the baseline that predicts the single most frequent target
/// token at every position (ties to the lowest id). A model has learned
/// something once it beats this.
pub fn most_frequent_token_accuracy(examples: &[PreparedExample]) -> f64 {
    let mut counts: std::collections::BTreeMap<usize, usize> = std::collections::BTreeMap::new();
    let mut total = 0usize;
    for ex in examples {
        for token in decoder_target(ex.transcript_lang, &ex.transcript_ids) {
            *counts.entry(token).or_insert(0) += 1;
            total += 1;
        }
    }
    if total == 0 {
        return 0.0;
    }
    let modal = counts.values().copied().max().unwrap_or(0);
    modal as f64 / total as f64
}
