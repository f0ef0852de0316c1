use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{OptimizerConfig, SchedulerConfig};

/// Surrogate families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    /// POD + closed-form least-squares propagator.
    #[serde(rename = "PODLR")]
    Podlr,
    /// POD + gradient-trained linear propagator.
    #[serde(rename = "PODLRt")]
    Podlrt,
    /// POD + MLP propagator.
    #[serde(rename = "PODMLP")]
    Podmlp,
    /// Linear autoencoders + Koopman operator, trained end to end.
    #[serde(rename = "LKAE")]
    Lkae,
    /// Linear state autoencoder, nonlinear forcing encoder, Koopman operator.
    #[serde(rename = "KAE")]
    Kae,
}

impl Family {
    pub fn is_pod(self) -> bool {
        matches!(self, Family::Podlr | Family::Podlrt | Family::Podmlp)
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Podlr => "PODLR",
            Family::Podlrt => "PODLRt",
            Family::Podmlp => "PODMLP",
            Family::Lkae => "LKAE",
            Family::Kae => "KAE",
        }
    }

    pub fn default_loss(self) -> LossConfig {
        LossConfig {
            alpha_pred: 1.0,
            alpha_recon: if self.is_pod() { 0.0 } else { 1.0 },
            alpha_eig: 0.0,
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub alpha_pred: f64,
    pub alpha_recon: f64,
    pub alpha_eig: f64,
}

impl LossConfig {
    pub fn validate_for(&self, family: Family) -> Result<()> {
        for (name, a) in [
            ("alpha_pred", self.alpha_pred),
            ("alpha_recon", self.alpha_recon),
            ("alpha_eig", self.alpha_eig),
        ] {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::config(format!("loss.{name}"), format!("{a} is outside [0, 1]")));
            }
        }
        if family.is_pod() && self.alpha_recon != 0.0 {
            return Err(Error::config("loss.alpha_recon", "must be 0 for POD-based surrogates"));
        }
        if family == Family::Podmlp && self.alpha_eig != 0.0 {
            return Err(Error::config("loss.alpha_eig", "an MLP propagator has no eigenvalues"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnrollConfig {
    /// Unrolled steps N_TU.
    pub steps: usize,
    #[serde(default = "one")]
    pub window_stride: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EarlyStopConfig {
    pub tolerance: f64,
    pub patience: usize,
}

impl Default for EarlyStopConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-3,
            patience: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    pub scheduler: SchedulerConfig,
    pub early_stop: EarlyStopConfig,
    /// Family default when absent: (1, 0, 0) for POD, (1, 1, 0) for KAE.
    pub loss: Option<LossConfig>,
    pub unroll: Option<UnrollConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            max_epochs: 100,
            seed: 0,
            optimizer: OptimizerConfig::default(),
            scheduler: SchedulerConfig::default(),
            early_stop: EarlyStopConfig::default(),
            loss: None,
            unroll: None,
        }
    }
}

impl TrainConfig {
    pub fn loss_for(&self, family: Family) -> LossConfig {
        self.loss.unwrap_or_else(|| family.default_loss())
    }

    pub fn validate_for(&self, family: Family) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be positive"));
        }
        self.optimizer
            .validate()
            .map_err(|e| Error::config("train.optimizer", e.to_string()))?;
        let s = &self.scheduler;
        if !(s.factor > 0.0 && s.factor < 1.0) || s.min_improvement < 0.0 {
            return Err(Error::config("train.scheduler", "factor must be in (0,1), min_improvement ≥ 0"));
        }
        if self.early_stop.tolerance < 0.0 {
            return Err(Error::config("train.early_stop.tolerance", "must be non-negative"));
        }
        self.loss_for(family).validate_for(family)?;
        if let Some(u) = self.unroll {
            if u.steps == 0 || u.window_stride == 0 {
                return Err(Error::config("train.unroll", "steps and window_stride must be ≥ 1"));
            }
            if u.steps >= self.batch_size {
                return Err(Error::config(
                    "train.unroll.steps",
                    format!("{} unrolled steps must be smaller than batch_size {}", u.steps, self.batch_size),
                ));
            }
        }
        if family == Family::Podlr {
            if self.unroll.is_some_and(|u| u.steps > 1) {
                return Err(Error::config("train.unroll", "PODLR is fitted in closed form; use PODLRt"));
            }
            if self.loss_for(family).alpha_eig != 0.0 {
                return Err(Error::config("loss.alpha_eig", "PODLR is fitted in closed form; use PODLRt"));
            }
        }
        Ok(())
    }
}
