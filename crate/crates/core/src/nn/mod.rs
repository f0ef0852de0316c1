//! Small neural-network kernel: affine layers, ReLU MLPs, a reverse-mode
//! tape, Adam/AdamW, plateau LR scheduling and early stopping.

mod graph;
mod mlp;
mod optim;
mod schedule;

pub use graph::{Gradients, Graph, Var};
pub use mlp::{Activation, AffineLayer, Mlp, MlpVars};
pub use optim::{clip_global_norm, OptimizerConfig, OptimizerKind, OptimizerState};
pub use schedule::{EarlyStopDecision, EarlyStopState, SchedulerConfig, SchedulerState};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Mean of squared elementwise differences.
pub fn mse(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!("mse: {:?} vs {:?}", a.shape(), b.shape())));
    }
    let n = a.as_slice().len();
    if n == 0 {
        return Ok(0.0);
    }
    let s: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(s / n as f64)
}
