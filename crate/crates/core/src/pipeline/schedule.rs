use serde::{Deserialize, Serialize};

use super::{PipelineError, Result};
use crate::frames::{AugmentConfig, EncoderConfig};
use crate::losses::LossConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub base_lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Samples per optimizer step.
    pub batch_size: usize,
    /// Batches whose gradients are averaged into one optimizer step.
    pub grad_accum: usize,
    pub alpha: f64,
    pub tau: f64,
    pub symmetric_loss: bool,
    pub logits_from_both_views: bool,
    pub seed: u64,
    pub clip_len: usize,
    pub augment: AugmentConfig,
    pub encoder: EncoderConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            warmup_epochs: 10,
            base_lr: 4e-5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 16,
            grad_accum: 1,
            alpha: 1.0,
            tau: 0.1,
            symmetric_loss: false,
            logits_from_both_views: false,
            seed: 0,
            clip_len: 16,
            augment: AugmentConfig::default(),
            encoder: EncoderConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.epochs == 0 || self.warmup_epochs >= self.epochs {
            return bad(format!(
                "warmup_epochs {} must be < epochs {}",
                self.warmup_epochs, self.epochs
            ));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return bad(format!("base_lr {} must be positive", self.base_lr));
        }
        if self.batch_size == 0 || self.grad_accum == 0 {
            return bad("batch_size and grad_accum must be >= 1".into());
        }
        if self.clip_len == 0 {
            return bad("clip_len must be >= 1".into());
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} {b} outside [0, 1)"));
            }
        }
        if self.adam_eps <= 0.0 || self.adam_eps.is_nan() {
            return bad("adam_eps must be positive".into());
        }
        self.loss_config().validate()?;
        self.augment.validate()?;
        self.encoder.validate()?;
        Ok(())
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            tau: self.tau,
            alpha: self.alpha,
            symmetric: self.symmetric_loss,
        }
    }

    /// Optimizer steps per epoch for a dataset of `samples`.
    pub fn steps_per_epoch(&self, samples: usize) -> usize {
        samples.div_ceil(self.batch_size).div_ceil(self.grad_accum).max(1)
    }
}

/// Per-step linear warmup from 0, then half-cosine decay to 0 at the last
/// epoch.
pub fn lr_at(step: usize, steps_per_epoch: usize, config: &TrainConfig) -> f64 {
    let spe = steps_per_epoch.max(1) as f64;
    let warm = config.warmup_epochs as f64 * spe;
    let s = step as f64;
    if s < warm {
        return config.base_lr * (s + 1.0) / warm;
    }
    let e = s / spe;
    let span = (config.epochs - config.warmup_epochs) as f64;
    let progress = ((e - config.warmup_epochs as f64) / span).min(1.0);
    config.base_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_is_linear_from_zero() {
        let c = TrainConfig::default();
        assert!((lr_at(0, 10, &c) - 4e-5 / 100.0).abs() < 1e-18);
        assert!((lr_at(99, 10, &c) - 4e-5).abs() < 1e-18);
    }

    #[test]
    fn boundary_is_continuous() {
        let c = TrainConfig::default();
        for spe in [1, 7, 100] {
            let a = lr_at(10 * spe - 1, spe, &c);
            let b = lr_at(10 * spe, spe, &c);
            assert!((a - b).abs() <= 1e-9 * c.base_lr);
        }
    }

    #[test]
    fn cosine_is_non_increasing() {
        let c = TrainConfig::default();
        let lrs: Vec<f64> = (100..1000).map(|s| lr_at(s, 10, &c)).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn validation() {
        TrainConfig::default().validate().unwrap();
        let c = TrainConfig {
            warmup_epochs: 100,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = TrainConfig {
            base_lr: 0.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn steps_per_epoch_rounds_up() {
        let c = TrainConfig {
            batch_size: 4,
            grad_accum: 2,
            ..Default::default()
        };
        assert_eq!(c.steps_per_epoch(32), 4);
        assert_eq!(c.steps_per_epoch(33), 5);
        assert_eq!(c.steps_per_epoch(0), 1);
    }
}
