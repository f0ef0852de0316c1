use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Adamw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Optional global-norm gradient clip.
    pub clip_norm: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            clip_norm: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.eps > 0.0
            && self.weight_decay >= 0.0
            && self.clip_norm.is_none_or(|c| c > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("optimizer settings {self:?}")))
        }
    }
}

/// Adam / AdamW state for a fixed list of parameter tensors.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    /// Current learning rate (the scheduler lowers it over a run).
    pub lr: f64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    step: u64,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, shapes: &[(usize, usize)]) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            lr: config.lr,
            m: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            step: 0,
            config,
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update. Adam folds weight decay into the gradient; AdamW applies
    /// `θ ← θ − lr·wd·θ` before the moment update.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(format!(
                "optimizer tracks {} tensors, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != self.m[i].shape() || g.shape() != self.m[i].shape() {
                return Err(Error::shape(format!("optimizer tensor {i} shape changed")));
            }
            if !g.all_finite() {
                return Err(Error::NonFiniteGradient { param: i });
            }
        }
        let scale = match self.config.clip_norm {
            Some(max) => {
                let norm = grads
                    .iter()
                    .map(|g| g.as_slice().iter().map(|x| x * x).sum::<f64>())
                    .sum::<f64>()
                    .sqrt();
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };

        self.step += 1;
        let c = &self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let lr = self.lr;
        let wd = c.weight_decay;
        let decoupled = c.kind == OptimizerKind::Adamw;

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let theta = p.as_mut_slice();
            for (k, th) in theta.iter_mut().enumerate() {
                let mut gk = g.as_slice()[k] * scale;
                if decoupled {
                    *th -= lr * wd * *th;
                } else if wd != 0.0 {
                    gk += wd * *th;
                }
                let mk = &mut m.as_mut_slice()[k];
                *mk = c.beta1 * *mk + (1.0 - c.beta1) * gk;
                let vk = &mut v.as_mut_slice()[k];
                *vk = c.beta2 * *vk + (1.0 - c.beta2) * gk * gk;
                let m_hat = m.as_slice()[k] / bc1;
                let v_hat = v.as_slice()[k] / bc2;
                *th -= lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}

/// Rescales `grads` in place so their joint Euclidean norm is at most `max`.
pub fn clip_global_norm(grads: &mut [Matrix], max: f64) {
    let norm = grads
        .iter()
        .map(|g| g.as_slice().iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm > max && norm > 0.0 {
        let s = max / norm;
        for g in grads {
            for x in g.as_mut_slice() {
                *x *= s;
            }
        }
    }
}
