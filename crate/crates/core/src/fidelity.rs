//! Surrogate reconstruction-quality model, the threshold-triggered
//! retransmission loop, and the per-step reward.
//!
//! Quality of a selection S for task category c at compression ratio ρ is
//! `min(1, Σ_{m∈S} u[c][m] · ρ^α)`, where ρ is the fraction of the selected
//! payload that fits in the slot budget.

use crate::channel::{AttemptChannel, ChannelParams};
use crate::domain::{GatingDecision, Modality, ModalityMask, PayloadTable, TaskCategory, TaskContext};
use crate::error::{Error, Result};

/// Compression ratio reported when the slot carries zero bytes.
pub const RHO_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct UtilityMatrix {
    /// `u[category][modality]`, both by ordinal.
    pub u: [[f64; 5]; 4],
    pub alpha: f64,
}

impl Default for UtilityMatrix {
    fn default() -> Self {
        Self {
            u: [
                [0.35, 0.00, 0.15, 0.40, 0.20],
                [0.10, 0.45, 0.30, 0.05, 0.20],
                [0.35, 0.00, 0.40, 0.15, 0.20],
                [0.10, 0.35, 0.15, 0.30, 0.20],
            ],
            alpha: 0.6,
        }
    }
}

impl UtilityMatrix {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("fidelity.alpha {} outside (0, 1]", self.alpha)));
        }
        for (c, row) in self.u.iter().enumerate() {
            for (m, v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(v) {
                    return Err(Error::Config(format!(
                        "utility[{}][{}] = {v} outside [0, 1]",
                        TaskCategory::ALL[c],
                        Modality::ALL[m]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn utility(&self, category: TaskCategory, m: Modality) -> f64 {
        self.u[category.ordinal()][m.ordinal()]
    }

    pub fn utility_sum(&self, category: TaskCategory, mask: ModalityMask) -> f64 {
        mask.iter().map(|m| self.utility(category, m)).sum()
    }
}

/// Everything needed to score and reward a transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct FidelityModel {
    pub matrix: UtilityMatrix,
    pub payloads: PayloadTable,
    /// Reward penalty per retransmission.
    pub lambda: f64,
    pub k_max_cap: u32,
}

impl Default for FidelityModel {
    fn default() -> Self {
        Self {
            matrix: UtilityMatrix::default(),
            payloads: PayloadTable::default(),
            lambda: 0.05,
            k_max_cap: 5,
        }
    }
}

impl FidelityModel {
    pub fn validate(&self) -> Result<()> {
        self.matrix.validate()?;
        if !(self.lambda >= 0.0) {
            return Err(Error::Config("fidelity.lambda must be nonnegative".into()));
        }
        if self.k_max_cap == 0 {
            return Err(Error::Config("fidelity.k_max_cap must be at least 1".into()));
        }
        Ok(())
    }

    /// Quality of `mask` for `category` when `budget` bytes fit in the slot.
    /// The empty mask scores 0.
    pub fn predicted_quality(&self, category: TaskCategory, mask: ModalityMask, budget: u64) -> f64 {
        if mask.is_empty() {
            return 0.0;
        }
        let rho = ratio(self.payloads.total(mask), budget);
        semantic_quality(category, mask, rho, &self.matrix)
    }

    /// Attempts allowed by the latency tolerance, capped at `k_max_cap`.
    pub fn max_attempts(&self, task: &TaskContext, channel: &ChannelParams) -> Result<u32> {
        let by_latency = (task.latency_tolerance_ms / channel.slot_ms).floor();
        let k = by_latency.min(f64::from(self.k_max_cap));
        if k < 1.0 {
            return Err(Error::Config(format!(
                "latency tolerance {} ms admits no {} ms slot",
                task.latency_tolerance_ms, channel.slot_ms
            )));
        }
        Ok(k as u32)
    }
}

fn ratio(total: u64, budget: u64) -> f64 {
    if budget == 0 {
        RHO_FLOOR
    } else {
        (budget as f64 / total as f64).min(1.0)
    }
}

pub fn compression_ratio(
    selection: &GatingDecision,
    payloads: &PayloadTable,
    byte_budget: u64,
) -> Result<f64> {
    if selection.selection_mask.is_empty() {
        return Err(Error::InvalidInput("cannot compress an empty selection".into()));
    }
    Ok(ratio(payloads.total(selection.selection_mask), byte_budget))
}

pub fn semantic_quality(
    category: TaskCategory,
    selection: ModalityMask,
    rho: f64,
    matrix: &UtilityMatrix,
) -> f64 {
    if selection.is_empty() {
        return 0.0;
    }
    (matrix.utility_sum(category, selection) * rho.powf(matrix.alpha)).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmissionOutcome {
    pub fidelity: f64,
    pub attempts: u32,
    pub retransmissions: u32,
    pub met_threshold: bool,
    pub compression_ratio_last: f64,
    pub byte_budget_last: u64,
    pub snr_db_last: f64,
}

/// Sends the selection, re-sending in full on a fresh channel draw until
/// quality reaches the task threshold or the attempt cap is hit. The
/// outcome reports the last attempt.
pub fn transmit_with_retransmission<C: AttemptChannel>(
    task: &TaskContext,
    decision: &GatingDecision,
    channel_params: &ChannelParams,
    link: &mut C,
    model: &FidelityModel,
) -> Result<TransmissionOutcome> {
    let k_max = model.max_attempts(task, channel_params)?;
    let mask = decision.selection_mask;
    let total = model.payloads.total(mask);
    let mut outcome = None;
    for attempt in 0..k_max {
        let draw = link.draw(attempt);
        let rho = if mask.is_empty() { 1.0 } else { ratio(total, draw.byte_budget) };
        let q = semantic_quality(task.category, mask, rho, &model.matrix);
        let met = q >= task.fidelity_threshold;
        outcome = Some(TransmissionOutcome {
            fidelity: q,
            attempts: attempt + 1,
            retransmissions: attempt,
            met_threshold: met,
            compression_ratio_last: rho,
            byte_budget_last: draw.byte_budget,
            snr_db_last: draw.instantaneous_snr_db,
        });
        if met {
            break;
        }
    }
    Ok(outcome.expect("k_max >= 1"))
}

pub fn reward(outcome: &TransmissionOutcome, lambda: f64) -> f64 {
    (outcome.fidelity - lambda * f64::from(outcome.retransmissions)).max(0.0)
}
