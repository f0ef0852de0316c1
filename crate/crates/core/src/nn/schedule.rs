use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerConfig {
    pub patience: usize,
    pub factor: f64,
    pub min_improvement: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            patience: 10,
            factor: 0.5,
            min_improvement: 0.0,
        }
    }
}

/// Reduce-on-plateau learning-rate schedule.
#[derive(Clone, Debug)]
pub struct SchedulerState {
    pub patience: usize,
    pub factor: f64,
    pub min_improvement: f64,
    pub best_monitored: f64,
    pub epochs_since_improve: usize,
}

impl SchedulerState {
    pub fn new(cfg: &SchedulerConfig) -> Self {
        Self {
            patience: cfg.patience,
            factor: cfg.factor,
            min_improvement: cfg.min_improvement,
            best_monitored: f64::INFINITY,
            epochs_since_improve: 0,
        }
    }

    /// Returns the learning rate to use for the next epoch.
    pub fn step(&mut self, val_loss: f64, lr: f64) -> f64 {
        if val_loss < self.best_monitored - self.min_improvement {
            self.best_monitored = val_loss;
            self.epochs_since_improve = 0;
            return lr;
        }
        self.epochs_since_improve += 1;
        if self.epochs_since_improve > self.patience {
            self.epochs_since_improve = 0;
            lr * self.factor
        } else {
            lr
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EarlyStopDecision {
    Continue,
    Stop,
}

#[derive(Clone, Debug)]
pub struct EarlyStopState {
    pub tolerance: f64,
    pub patience: usize,
    pub best_val: f64,
    pub epochs_since_improve: usize,
}

impl EarlyStopState {
    pub fn new(tolerance: f64, patience: usize) -> Self {
        Self {
            tolerance,
            patience,
            best_val: f64::INFINITY,
            epochs_since_improve: 0,
        }
    }

    /// Improvement is relative: `val < best·(1 − tolerance)`.
    pub fn step(&mut self, val_loss: f64) -> EarlyStopDecision {
        let improved = if self.best_val.is_infinite() {
            val_loss.is_finite()
        } else {
            val_loss < self.best_val * (1.0 - self.tolerance)
        };
        if improved {
            self.best_val = val_loss;
            self.epochs_since_improve = 0;
            return EarlyStopDecision::Continue;
        }
        self.epochs_since_improve += 1;
        if self.epochs_since_improve >= self.patience {
            EarlyStopDecision::Stop
        } else {
            EarlyStopDecision::Continue
        }
    }
}
