use serde::{Deserialize, Serialize};

use super::RecLossOptions;
use crate::models::ModelSpec;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// `None` selects the per-model default (see [`TrainConfig::lr_for`]).
    pub learning_rate: Option<f64>,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after this many optimizer steps even if epochs remain.
    pub max_steps: Option<usize>,
    /// Heavy-ball coefficient; plain SGD when absent.
    pub momentum: Option<f64>,
    pub clip_norm: Option<f64>,
    pub rec_loss: RecLossOptions,
    /// Weight of the adversarial term in the generator loss.
    pub gan_weight: f64,
    /// Measure wall-clock time per step. Off by default so that metrics
    /// files are reproducible byte for byte.
    pub record_timing: bool,
    /// Write a checkpoint every this many epochs.
    pub checkpoint_every: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: None,
            batch_size: 20,
            epochs: 30,
            max_steps: None,
            momentum: None,
            clip_norm: Some(10.0),
            rec_loss: RecLossOptions::default(),
            gan_weight: 0.01,
            record_timing: false,
            checkpoint_every: None,
        }
    }
}

impl TrainConfig {
    pub fn lr_for(&self, spec: &ModelSpec) -> f64 {
        self.learning_rate.unwrap_or(match spec {
            ModelSpec::Mrdn(_) => 1e-4,
            ModelSpec::Cbdnet(_) | ModelSpec::GanCbd(_) => 1e-3,
        })
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        let bad = |field: &str, reason: String| Err(Error::config(format!("{path}.{field}"), reason));
        if let Some(lr) = self.learning_rate {
            if !(lr >= 0.0 && lr.is_finite()) {
                return bad("learning_rate", format!("must be finite and non-negative, got {lr}"));
            }
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1".into());
        }
        if let Some(m) = self.momentum {
            if !(0.0..1.0).contains(&m) {
                return bad("momentum", format!("must lie in [0, 1), got {m}"));
            }
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return bad("clip_norm", format!("must be positive, got {c}"));
            }
        }
        let r = self.rec_loss;
        if !(r.alpha >= 0.0 && r.beta >= 1.0 && r.alpha.is_finite() && r.beta.is_finite()) {
            return bad("rec_loss", "alpha must be >= 0 and beta >= 1".into());
        }
        if !(self.gan_weight >= 0.0 && self.gan_weight.is_finite()) {
            return bad("gan_weight", format!("must be non-negative, got {}", self.gan_weight));
        }
        if self.checkpoint_every == Some(0) {
            return bad("checkpoint_every", "must be at least 1".into());
        }
        Ok(())
    }
}
