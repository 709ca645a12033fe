use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::cumulant::{HyperPair, Preset};

/// Default clip factor `M` for presets with a negative coefficient.
pub const DEFAULT_CLIP_FACTOR: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerConfig {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        b1: f64,
        b2: f64,
        eps: f64,
    },
}

impl OptimizerConfig {
    pub const fn adam(lr: f64) -> Self {
        OptimizerConfig::Adam {
            lr,
            b1: 0.0,
            b2: 0.9,
            eps: 1e-8,
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerConfig::Sgd { lr } | OptimizerConfig::Adam { lr, .. } => lr,
        }
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::adam(1e-4)
    }
}

/// Lipschitz regularisation of the discriminator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum Lipschitz {
    None,
    /// Clamp every parameter to `[-c, c]` after each update.
    Clip(f64),
    /// Gradient penalty with this coefficient.
    Gp(f64),
}

/// How the discriminator and generator gradients are assembled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientForm {
    /// Softmax sample weights times per-sample gradients.
    Weighted,
    /// Reverse-mode gradient of the batch loss estimator.
    Autodiff,
    /// Uniform means; the Wasserstein update regardless of `hp`.
    PlainMean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hp: HyperPair,
    pub k_disc: usize,
    pub batch_size: usize,
    pub disc_optimizer: OptimizerConfig,
    pub gen_optimizer: OptimizerConfig,
    pub lipschitz: Lipschitz,
    /// Discriminator output bound `M·tanh(D/M)`.
    pub clip_factor: Option<f64>,
    /// Generator updates.
    pub iterations: usize,
    pub seed: u64,
    /// Generator iterations at which to record sample snapshots.
    pub snapshot_at: Vec<usize>,
    pub snapshot_size: usize,
    pub gradient_form: GradientForm,
    /// Trace every `log_every` generator iterations (and the last one).
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hp: HyperPair::WASSERSTEIN,
            k_disc: 5,
            batch_size: 256,
            disc_optimizer: OptimizerConfig::default(),
            gen_optimizer: OptimizerConfig::default(),
            lipschitz: Lipschitz::Gp(10.0),
            clip_factor: None,
            iterations: 1000,
            seed: 0,
            snapshot_at: Vec::new(),
            snapshot_size: 1000,
            gradient_form: GradientForm::Weighted,
            log_every: 1,
        }
    }
}

impl TrainConfig {
    /// Defaults with `preset`'s `(β, γ)`, bounding `D` with
    /// [`DEFAULT_CLIP_FACTOR`] when a coefficient is negative.
    pub fn for_preset(preset: Preset) -> Result<Self, TrainError> {
        let hp = preset.hyper_pair()?;
        Ok(Self {
            hp,
            clip_factor: hp.has_negative().then_some(DEFAULT_CLIP_FACTOR),
            ..Self::default()
        })
    }

    /// Checks the invariants; returns advisory warnings.
    pub fn validate(&self) -> Result<Vec<String>, TrainError> {
        let bad = |msg: String| Err(TrainError::Config(msg));
        if self.batch_size < 2 {
            return bad(format!("batch size must be at least 2, got {}", self.batch_size));
        }
        if self.k_disc == 0 {
            return bad("k_disc must be at least 1".into());
        }
        for opt in [self.disc_optimizer, self.gen_optimizer] {
            let lr = opt.lr();
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("learning rate must be positive, got {lr}"));
            }
            if let OptimizerConfig::Adam { b1, b2, eps, .. } = opt {
                if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2) && eps > 0.0) {
                    return bad("adam needs b1, b2 in [0, 1) and eps > 0".into());
                }
            }
        }
        match self.lipschitz {
            Lipschitz::Gp(c) if !(c >= 0.0 && c.is_finite()) => {
                return bad(format!("gradient penalty coefficient must be >= 0, got {c}"));
            }
            Lipschitz::Clip(c) if !(c > 0.0 && c.is_finite()) => {
                return bad(format!("weight clip must be positive, got {c}"));
            }
            _ => {}
        }
        if let Some(m) = self.clip_factor {
            if !(m > 0.0 && m.is_finite()) {
                return bad(format!("clip factor must be positive, got {m}"));
            }
        }
        if self.log_every == 0 {
            return bad("log_every must be at least 1".into());
        }
        let mut warnings = Vec::new();
        if let OptimizerConfig::Sgd { lr } = self.disc_optimizer {
            if lr * self.hp.beta >= 1.0 {
                warnings.push(format!(
                    "learning rate {lr} times beta {} is >= 1; keep it below 1/beta",
                    self.hp.beta
                ));
            }
        }
        if self.hp.has_negative() && self.clip_factor.is_none() {
            warnings.push("negative coefficient without a clip factor; losses may overflow".into());
        }
        Ok(warnings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_sets_clip_only_for_negative_coefficients() {
        let kld = TrainConfig::for_preset(Preset::Kld).unwrap();
        assert_eq!(kld.clip_factor, None);
        let chi = TrainConfig::for_preset(Preset::Chi2).unwrap();
        assert_eq!(chi.clip_factor, Some(DEFAULT_CLIP_FACTOR));
        assert!(chi.validate().unwrap().is_empty());
    }

    #[test]
    fn validation() {
        let mut c = TrainConfig {
            batch_size: 1,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        c.batch_size = 2;
        c.lipschitz = Lipschitz::Gp(-1.0);
        assert!(c.validate().is_err());
        c.lipschitz = Lipschitz::None;
        c.hp = HyperPair::new(20.0, 0.0).unwrap();
        c.disc_optimizer = OptimizerConfig::Sgd { lr: 0.1 };
        assert_eq!(c.validate().unwrap().len(), 1);
    }
}
