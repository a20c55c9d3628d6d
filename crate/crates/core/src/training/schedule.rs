//! The tri-stage learning-rate schedule and the early freeze plan.
//!
//! Stage lengths scale inversely with the batch size so the same amount of
//! data passes through each stage regardless of batching: a batch of 64
//! gets 500 warmup steps, a batch of 32 gets 1000, and so on. The freeze
//! plan follows the same scaling and exempts only the convolutional bridge
//! and the first-pass decoder attention, the two groups that exist to glue
//! pre-trained components together.

use serde::{Deserialize, Serialize};

use crate::nn::store::{ParamId, ParameterStore};

use super::TrainingError;

/// Reference batch size the stage lengths are quoted at.
pub const REFERENCE_BATCH: f64 = 64.0;
pub const WARMUP_AT_REFERENCE: f64 = 500.0;
pub const HOLD_AT_REFERENCE: f64 = 500.0;
pub const DECAY_AT_REFERENCE: f64 = 3000.0;
pub const FREEZE_AT_REFERENCE: f64 = 500.0;
/// The learning rate never decays below peak divided by this.
pub const FLOOR_DIVISOR: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriStageSchedule {
    pub peak_lr: f64,
    pub batch_size: usize,
}

impl Default for TriStageSchedule {
    fn default() -> Self {
        TriStageSchedule { peak_lr: 5e-4, batch_size: 64 }
    }
}

impl TriStageSchedule {
    pub fn new(peak_lr: f64, batch_size: usize) -> TriStageSchedule {
        TriStageSchedule { peak_lr, batch_size }
    }

    pub fn validate(&self) -> Result<(), TrainingError> {
        if !(self.peak_lr.is_finite() && self.peak_lr > 0.0) {
            return Err(TrainingError::InvalidPlan("peak learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainingError::InvalidPlan("batch size must be at least 1".into()));
        }
        Ok(())
    }

    fn scale(&self) -> f64 {
        REFERENCE_BATCH / self.batch_size as f64
    }

    pub fn warmup_steps(&self) -> f64 {
        self.scale() * WARMUP_AT_REFERENCE
    }

    pub fn hold_steps(&self) -> f64 {
        self.scale() * HOLD_AT_REFERENCE
    }

    pub fn decay_steps(&self) -> f64 {
        self.scale() * DECAY_AT_REFERENCE
    }

    pub fn floor(&self) -> f64 {
        self.peak_lr / FLOOR_DIVISOR
    }
}

/// Learning rate at an optimizer step: linear from zero to the peak over
/// the warmup, flat at the peak through the hold, linear down to the floor
/// over the decay, then flat at the floor forever.
pub fn lr_at(step: usize, sched: &TriStageSchedule) -> f64 {
    let s = step as f64;
    let warmup = sched.warmup_steps();
    let hold_end = warmup + sched.hold_steps();
    let decay_end = hold_end + sched.decay_steps();
    if s <= warmup {
        sched.peak_lr * (s / warmup)
    } else if s <= hold_end {
        sched.peak_lr
    } else if s <= decay_end {
        // Two-coefficient form: exact at both endpoints, so the one-sided
        // values at the hold and floor boundaries agree bit for bit.
        let progress = (s - hold_end) / sched.decay_steps();
        sched.peak_lr * (1.0 - progress) + sched.floor() * progress
    } else {
        sched.floor()
    }
}

/// During the first `freeze_steps` optimizer steps only the exempt groups
/// train; afterwards everything does.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreezePlan {
    pub freeze_steps: f64,
}

/// Name segments whose parameters stay trainable through the freeze.
pub const EXEMPT_GROUPS: [&str; 2] = ["bridge", "first_dec_attn"];

impl FreezePlan {
    pub fn for_batch(batch_size: usize) -> FreezePlan {
        FreezePlan { freeze_steps: FREEZE_AT_REFERENCE * REFERENCE_BATCH / batch_size as f64 }
    }

    pub fn disabled() -> FreezePlan {
        FreezePlan { freeze_steps: 0.0 }
    }

    pub fn is_frozen(&self, step: usize) -> bool {
        (step as f64) < self.freeze_steps
    }

    /// Whether a parameter with this canonical name trains at this step.
    pub fn trainable(&self, step: usize, name: &str) -> bool {
        !self.is_frozen(step) || is_exempt(name)
    }
}

/// Exemption is by whole path segment, so `bridge` matches `l1.asr.bridge.c0.w`
/// but nothing merely containing the letters.
pub fn is_exempt(name: &str) -> bool {
    name.split('.').any(|seg| EXEMPT_GROUPS.contains(&seg))
}

/// The ids allowed to move at this step.
pub fn freeze_mask(plan: &FreezePlan, step: usize, store: &ParameterStore) -> Vec<ParamId> {
    store
        .iter()
        .filter(|(_, p)| plan.trainable(step, &p.name))
        .map(|(id, _)| id)
        .collect()
}
