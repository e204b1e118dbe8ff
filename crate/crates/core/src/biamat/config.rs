use serde::{Deserialize, Serialize};

use crate::attacks::{AttackConfig, AttackLoss};
use crate::error::{Error, Result};

/// Adversarial loss applied to the primary task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrimaryLoss {
    /// Cross-entropy at PGD-attacked inputs.
    AtCe,
    /// `CE(natural) + β·KL(natural ‖ adversarial)` with the KL attack.
    Trades,
}

/// Adversarial loss applied to auxiliary samples (both routing groups).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuxLoss {
    SameAsPrimary,
    /// Plain adversarial cross-entropy, whatever the primary loss is.
    Ce,
}

/// Which primary batches the threshold averages confidence over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMode {
    /// Every primary training sample, after the final warm-up epoch.
    EpochMean,
    /// Only the last warm-up minibatch.
    LastBatch,
}

/// How auxiliary samples are assigned to the two loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Routing {
    /// Below-threshold primary confidence routes low, everything else high.
    Confidence,
    /// Every auxiliary sample trains the auxiliary head on its own label.
    ForceHigh,
    /// Every auxiliary sample trains the primary head on the uniform label.
    ForceLow,
}

/// Step schedule: the rate is multiplied by `factor` at each milestone, given as a
/// fraction of the total epoch count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial: f64,
    pub milestones: Vec<f64>,
    pub factor: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            initial: 0.1,
            milestones: vec![0.6, 0.9],
            factor: 0.1,
        }
    }
}

impl LrSchedule {
    /// Learning rate during `epoch` (0-based) of `total`.
    pub fn rate(&self, epoch: usize, total: usize) -> f64 {
        let passed = self
            .milestones
            .iter()
            // A milestone never lands on the first epoch, so training starts at `initial`.
            .filter(|&&m| epoch >= ((m * total as f64).floor() as usize).max(1))
            .count();
        self.initial * self.factor.powi(passed as i32)
    }
}

/// Attacks used for the per-epoch held-out evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub pgd: AttackConfig,
    pub cw: Option<AttackConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub alpha: f64,
    pub pi: f64,
    pub epochs: usize,
    pub warmup: usize,
    pub lr: LrSchedule,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_pri: usize,
    pub batch_aux: usize,
    pub primary_loss: PrimaryLoss,
    pub aux_loss: AuxLoss,
    pub trades_beta: f64,
    pub attack: AttackConfig,
    pub eval: EvalConfig,
    pub threshold_mode: ThresholdMode,
    pub routing: Routing,
    pub seed: u64,
}

impl TrainConfig {
    /// Toy-scale defaults: α=1, π=0.55, 64+64 batches, PGD¹⁰ with step ε/4 for training
    /// and PGD²⁰/CW²⁰ for evaluation.
    pub fn toy(epsilon: f64) -> Self {
        Self {
            alpha: 1.0,
            pi: 0.55,
            epochs: 20,
            warmup: 2,
            lr: LrSchedule::default(),
            momentum: 0.9,
            weight_decay: 0.0,
            batch_pri: 64,
            batch_aux: 64,
            primary_loss: PrimaryLoss::AtCe,
            aux_loss: AuxLoss::SameAsPrimary,
            trades_beta: 6.0,
            attack: AttackConfig::pgd(epsilon, 10),
            eval: EvalConfig {
                pgd: AttackConfig::pgd(epsilon, 20),
                cw: Some(AttackConfig::pgd(epsilon, 20).with_loss(AttackLoss::CwMargin)),
            },
            threshold_mode: ThresholdMode::EpochMean,
            routing: Routing::Confidence,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(self.pi >= 0.0 && self.pi.is_finite()) {
            return bad(format!(
                "pi must be finite and non-negative, got {}",
                self.pi
            ));
        }
        if self.epochs == 0 || self.warmup >= self.epochs {
            return bad(format!(
                "need warmup < epochs, got warmup {} and epochs {}",
                self.warmup, self.epochs
            ));
        }
        if self.batch_pri == 0 || self.batch_aux == 0 {
            return bad("batch sizes must be at least 1".into());
        }
        if !(self.lr.initial > 0.0) || !(self.lr.factor > 0.0) {
            return bad("learning rate and decay factor must be positive".into());
        }
        if !(0.0..1.0).contains(&self.momentum) || self.weight_decay < 0.0 {
            return bad("momentum must be in [0, 1) and weight decay non-negative".into());
        }
        if self.trades_beta < 0.0 {
            return bad(format!(
                "trades_beta must be non-negative, got {}",
                self.trades_beta
            ));
        }
        self.attack.validate()?;
        self.eval.pgd.validate()?;
        if let Some(cw) = &self.eval.cw {
            cw.validate()?;
        }
        Ok(())
    }
}
