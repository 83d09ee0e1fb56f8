//! Training configuration. Defaults are the published recipe; the desk-scale
//! runs override sizes and rates through the same struct.

use alloc::format;

use crate::error::Error;
use crate::Result;

/// How the student's view of the target image is masked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskingMode {
    /// No masking; plain pseudo-label self-training.
    Off,
    /// Zero out pixel blocks of the input image.
    Image,
    /// Replace masked patch-token embeddings with the learnable mask token.
    Token,
}

impl MaskingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MaskingMode::Off => "off",
            MaskingMode::Image => "image",
            MaskingMode::Token => "token",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(MaskingMode::Off),
            "image" => Ok(MaskingMode::Image),
            "token" => Ok(MaskingMode::Token),
            other => Err(Error::InvalidConfig(format!("unknown masking mode `{other}`"))),
        }
    }
}

/// Which data a training run consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunKind {
    /// Supervised on labeled source only.
    Baseline,
    /// Labeled source plus unlabeled target self-training.
    Uda,
    /// Supervised on labeled target only (empirical upper bound).
    Oracle,
    /// Supervised on the labeled out-of-target train split.
    OracleOutOfTarget,
}

impl RunKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RunKind::Baseline => "baseline",
            RunKind::Uda => "uda",
            RunKind::Oracle => "oracle",
            RunKind::OracleOutOfTarget => "oracle_out_of_target",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(RunKind::Baseline),
            "uda" => Ok(RunKind::Uda),
            "oracle" => Ok(RunKind::Oracle),
            "oracle_out_of_target" => Ok(RunKind::OracleOutOfTarget),
            other => Err(Error::InvalidConfig(format!("unknown run kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// EMA weight for the teacher update.
    pub alpha: f64,
    /// Softmax confidence threshold for keeping a pseudo-label pixel.
    pub rho: f64,
    /// Fraction of token blocks masked on the student's target view.
    pub mask_ratio: f64,
    /// Side length, in tokens, of the square masking blocks.
    pub mask_block_size: usize,
    pub lr_decoder: f64,
    pub lr_encoder: f64,
    pub total_iters: usize,
    pub warmup_iters: usize,
    pub batch_size: usize,
    /// Rare-class sampling temperature.
    pub rcs_temperature: f64,
    pub masking: MaskingMode,
    pub use_fd: bool,
    pub use_hrda: bool,
    /// Weight on the feature-distance loss when enabled.
    pub fd_weight: f64,
    /// Weight on the target self-training loss relative to the source loss.
    pub target_loss_weight: f64,
    /// Brightness/contrast jitter amplitude on the student's target view.
    pub jitter: f64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub run_kind: RunKind,
    /// Validate every this many steps (0 = only at the end).
    pub val_interval: usize,
    /// Write a checkpoint every this many steps (0 = only at the end).
    pub checkpoint_interval: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.999,
            rho: 0.968,
            mask_ratio: 0.7,
            mask_block_size: 4,
            lr_decoder: 1.4e-4,
            lr_encoder: 1.4e-5,
            total_iters: 40_000,
            warmup_iters: 1500,
            batch_size: 8,
            rcs_temperature: 0.01,
            masking: MaskingMode::Token,
            use_fd: false,
            use_hrda: false,
            fd_weight: 0.005,
            target_loss_weight: 1.0,
            jitter: 0.2,
            weight_decay: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            run_kind: RunKind::Uda,
            val_interval: 0,
            checkpoint_interval: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidConfig(format!("alpha {} outside (0,1]", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::InvalidConfig(format!("rho {} outside [0,1]", self.rho)));
        }
        if !(0.0..=1.0).contains(&self.mask_ratio) {
            return Err(Error::InvalidConfig(format!("mask_ratio {} outside [0,1]", self.mask_ratio)));
        }
        if self.mask_block_size == 0 {
            return Err(Error::InvalidConfig("mask_block_size must be >= 1".into()));
        }
        if self.lr_decoder <= 0.0 || self.lr_encoder <= 0.0 {
            return Err(Error::InvalidConfig("learning rates must be positive".into()));
        }
        if self.warmup_iters >= self.total_iters && self.total_iters > 0 {
            return Err(Error::InvalidConfig(format!(
                "warmup_iters {} must be below total_iters {}",
                self.warmup_iters, self.total_iters
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.rcs_temperature <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "rcs_temperature {} must be positive",
                self.rcs_temperature
            )));
        }
        if self.fd_weight < 0.0 || self.target_loss_weight < 0.0 {
            return Err(Error::InvalidConfig("loss weights must be nonnegative".into()));
        }
        Ok(())
    }
}
