//! The CAPO coordinate update.
//!
//! One iteration moves each selected parameter by
//! `theta(s,a) += alpha(s,a) * sign(A(s,a))`; every other parameter is left
//! alone. Which coordinates move is decided by a [`Generator`], how far by a
//! [`StepRule`].

mod generator;
mod oracles;
mod train;

pub use generator::{behavior_policy, CoordinateBatch, EpsSchedule, Generator};
pub use oracles::{
    batch_capo_weights, batch_rate_constant, capo_one_step_improvement, capo_one_step_lower_bound,
    cyclic_rate_constant, fixed_lr_one_step_improvement, predicted_weight_delta,
    randomized_rate_constant, WeightDelta,
};
pub use train::{train, CriticMode, History, HistoryRecord, RetraceSettings, TrainConfig};

use crate::error::{Error, Result};
use crate::policy::{capo_alpha_from_log, oncapo_alpha_from_log, OnCapoConfig, Sign, SoftmaxTable};

/// Cap on [`StepRule::ExactLog`]. `exp(-1000)` is zero in `f64`, so every
/// representable probability still gets the exact step; without the cap the
/// logits of losing actions double every batch and overflow.
pub const EXACT_LOG_CAP: f64 = 1000.0;

/// Magnitude of a coordinate step.
#[derive(Debug, Clone, PartialEq)]
pub enum StepRule {
    /// `min(log(1/pi), clip)`.
    Capo { clip: f64 },
    /// `log(1/pi)`; Batch CAPO's rate guarantee needs equality. Steps are
    /// capped at [`EXACT_LOG_CAP`], past the point where `pi` underflows.
    ExactLog,
    /// Constant step `eta`.
    Fixed { eta: f64 },
    /// On-policy three-branch rule; owns the visit counts.
    OnCapo(OnCapoConfig),
}

impl StepRule {
    pub fn capo() -> Self {
        StepRule::Capo {
            clip: crate::policy::DEFAULT_CLIP,
        }
    }

    fn alpha(&mut self, log_pi: f64, sign: Sign, s: usize, a: usize) -> Result<f64> {
        match self {
            StepRule::Capo { clip } => Ok(capo_alpha_from_log(log_pi, *clip)),
            StepRule::ExactLog => Ok(capo_alpha_from_log(log_pi, EXACT_LOG_CAP)),
            StepRule::Fixed { eta } => Ok(*eta),
            StepRule::OnCapo(cfg) => {
                cfg.record_visit(s, a);
                oncapo_alpha_from_log(log_pi, sign, cfg, s, a)
            }
        }
    }
}

/// Applies one CAPO update for `batch` with the given advantage signs.
///
/// Simultaneous batches compute every step size from the pre-update table;
/// sequential batches recompute it from the table as it is being updated.
pub fn capo_update(
    table: &mut SoftmaxTable,
    batch: &CoordinateBatch,
    signs: &[Sign],
    rule: &mut StepRule,
) -> Result<()> {
    if signs.len() != batch.pairs.len() {
        return Err(Error::Contract(format!(
            "{} signs supplied for {} coordinates",
            signs.len(),
            batch.pairs.len()
        )));
    }
    if let Some(&(s, a)) = batch
        .pairs
        .iter()
        .find(|(s, a)| *s >= table.n_states() || *a >= table.n_actions())
    {
        return Err(Error::Contract(format!("coordinate ({s}, {a}) out of range")));
    }
    if batch.sequential {
        for (&(s, a), &sign) in batch.pairs.iter().zip(signs) {
            let log_pi = table.log_probs(s)?[a];
            let alpha = rule.alpha(log_pi, sign, s, a)?;
            if sign != Sign::Zero {
                table.add(s, a, alpha * sign.as_f64());
            }
        }
    } else {
        let mut steps = Vec::with_capacity(batch.pairs.len());
        for (&(s, a), &sign) in batch.pairs.iter().zip(signs) {
            let log_pi = table.log_probs(s)?[a];
            steps.push(rule.alpha(log_pi, sign, s, a)? * sign.as_f64());
        }
        for (&(s, a), step) in batch.pairs.iter().zip(steps) {
            if step != 0.0 {
                table.add(s, a, step);
            }
        }
    }
    Ok(())
}
