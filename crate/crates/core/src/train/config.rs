use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

/// How SKIP is trained relative to the rest of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Train everything jointly from the start.
    Direct,
    /// Pre-train SKIP alone, then train the whole network.
    PretrainSkipThenJoint,
    /// Pre-train SKIP alone, then train the rest with SKIP frozen.
    PretrainSkipThenFreeze,
}

impl TrainMode {
    pub const ALL: [TrainMode; 3] =
        [TrainMode::Direct, TrainMode::PretrainSkipThenJoint, TrainMode::PretrainSkipThenFreeze];

    pub fn pretrains_skip(self) -> bool {
        self != TrainMode::Direct
    }

    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Direct => "direct",
            TrainMode::PretrainSkipThenJoint => "pretrain_skip_then_joint",
            TrainMode::PretrainSkipThenFreeze => "pretrain_skip_then_freeze",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub lr0: f64,
    /// Steps between learning-rate halvings.
    pub lr_halve_every: u64,
    /// Training stops once the scheduled rate falls below this.
    pub lr_stop: f64,
    pub batch: usize,
    /// LR patch side.
    pub patch: usize,
    /// Upper bound on main-phase steps; `None` runs until `lr_stop`.
    pub max_steps: Option<u64>,
    /// SKIP pre-training steps; `None` uses `lr_halve_every`.
    pub pretrain_steps: Option<u64>,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Steps between training-log records (0 disables).
    pub log_every: u64,
    /// Steps between validation passes (0 disables).
    pub val_every: u64,
    /// Steps between periodic checkpoints (0 disables).
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::Direct,
            lr0: 1e-4,
            lr_halve_every: 200_000,
            lr_stop: 5e-7,
            batch: 16,
            patch: 48,
            max_steps: None,
            pretrain_steps: None,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            log_every: 100,
            val_every: 0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_stop > 0.0 && self.lr0 > self.lr_stop) {
            return Err(config_err!(
                "train.lr0 ({}) must exceed train.lr_stop ({}) and both must be positive",
                self.lr0,
                self.lr_stop
            ));
        }
        if self.lr_halve_every == 0 {
            return Err(config_err!("train.lr_halve_every must be at least 1"));
        }
        if self.batch == 0 {
            return Err(config_err!("train.batch must be at least 1"));
        }
        if self.patch == 0 {
            return Err(config_err!("train.patch must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(config_err!("train.beta1 and train.beta2 must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(config_err!("train.eps must be positive"));
        }
        Ok(())
    }

    pub fn pretrain_steps(&self) -> u64 {
        if self.mode.pretrains_skip() {
            self.pretrain_steps.unwrap_or(self.lr_halve_every)
        } else {
            0
        }
    }
}

/// `lr0 · 2^(−⌊step / lr_halve_every⌋)`.
pub fn lr_schedule(step: u64, cfg: &TrainConfig) -> f64 {
    let halvings = step / cfg.lr_halve_every.max(1);
    cfg.lr0 * 0.5f64.powi(halvings.min(2000) as i32)
}
