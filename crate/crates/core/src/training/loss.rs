use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{Graph, Var};
use crate::propagators::Propagator;

use super::config::LossConfig;
use super::eig_penalty::eig_penalty;
use super::model::{LatentModel, ModelVars};

/// Where predictions are compared with targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossSpace {
    /// Window holds precomputed latents (POD families).
    Latent,
    /// Window holds normalized physical snapshots; predictions are decoded.
    Physical,
}

/// A batch of trajectory windows in row layout. `states[s]` and
/// `forcings[s]` are `batch × dim` matrices at offset `s` from each window
/// start, for `s = 0..=steps`.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub states: Vec<Matrix>,
    pub forcings: Vec<Matrix>,
}

impl Window {
    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn batch(&self) -> usize {
        self.states.first().map_or(0, |m| m.rows())
    }

    /// Windows of `steps + 1` consecutive rows starting at each of `starts`.
    pub fn gather(states: &Matrix, forcings: &Matrix, starts: &[usize], steps: usize) -> Result<Self> {
        let last = starts.iter().max().map_or(0, |s| s + steps);
        if last >= states.rows() || last >= forcings.rows() {
            return Err(Error::shape(format!(
                "window end {last} beyond {} time steps",
                states.rows().min(forcings.rows())
            )));
        }
        let mut w = Window {
            states: Vec::with_capacity(steps + 1),
            forcings: Vec::with_capacity(steps + 1),
        };
        for s in 0..=steps {
            let idx: Vec<usize> = starts.iter().map(|k| k + s).collect();
            w.states.push(states.select_rows(&idx));
            w.forcings.push(forcings.select_rows(&idx));
        }
        Ok(w)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub pred: f64,
    pub recon: f64,
    pub eig: f64,
}

pub(crate) struct LossVars {
    pub total: Var,
}

/// Records `α_pred·Σ_s MSE(M^s, x_{k+s}) + α_recon·recon + α_eig·penalty`
/// on `g`. Step `s` is fed the forcings at offsets `s−1` and `s`.
pub(crate) fn build_loss(
    g: &mut Graph,
    vars: &ModelVars,
    model: &LatentModel,
    window: &Window,
    space: LossSpace,
    cfg: &LossConfig,
) -> Result<(LossVars, LossParts)> {
    let steps = window.steps();
    if steps == 0 || window.forcings.len() != steps + 1 {
        return Err(Error::shape(format!(
            "window needs ≥ 2 aligned snapshots, got {} states / {} forcings",
            window.states.len(),
            window.forcings.len()
        )));
    }
    let stacks = match space {
        LossSpace::Physical => Some(vars.stacks.as_ref().ok_or_else(|| Error::Graph("stacks not bound".into()))?),
        LossSpace::Latent => None,
    };

    let x0 = g.constant(window.states[0].clone());
    let mut z = match stacks {
        Some((s, _)) => s.encode(g, x0)?,
        None => x0,
    };
    let mut v = Vec::with_capacity(steps + 1);
    for f in &window.forcings {
        let fv = g.constant(f.clone());
        v.push(match stacks {
            Some((_, fs)) => fs.encode(g, fv)?,
            None => fv,
        });
    }

    let mut pred_terms = Vec::with_capacity(steps);
    for s in 1..=steps {
        z = vars.propagator.step(g, z, v[s - 1], v[s])?;
        let out = match stacks {
            Some((st, _)) => st.decode(g, z)?,
            None => z,
        };
        let target = g.constant(window.states[s].clone());
        pred_terms.push((g.mse(out, target)?, 1.0));
    }
    let pred = g.weighted_sum(&pred_terms)?;

    let mut terms = vec![(pred, cfg.alpha_pred)];
    let mut parts = LossParts {
        pred: g.scalar(pred),
        ..Default::default()
    };
    if let Some((st, _)) = stacks {
        if cfg.alpha_recon != 0.0 {
            let z0 = st.encode(g, x0)?;
            let back = st.decode(g, z0)?;
            let recon = g.mse(back, x0)?;
            parts.recon = g.scalar(recon);
            terms.push((recon, cfg.alpha_recon));
        }
    }
    if !matches!(model.propagator, Propagator::Mlp(_)) {
        if cfg.alpha_eig != 0.0 {
            let inner = vars.propagator.inner_block(g)?;
            let pen = g.eig_penalty(inner)?;
            parts.eig = g.scalar(pen);
            terms.push((pen, cfg.alpha_eig));
        } else {
            parts.eig = eig_penalty(&model.propagator.inner_block()?)?;
        }
    } else if cfg.alpha_eig != 0.0 {
        return Err(Error::UnsupportedPropagator("MLP"));
    }
    let total = g.weighted_sum(&terms)?;
    parts.total = g.scalar(total);
    Ok((LossVars { total }, parts))
}

fn check_space(model: &LatentModel, space: LossSpace) -> Result<()> {
    let neural_stack = !model.state_stack.parameters().is_empty() || !model.forcing_stack.parameters().is_empty();
    if space == LossSpace::Latent && neural_stack {
        return Err(Error::InvalidParam(
            "latent-space losses need fixed (POD) encoders".into(),
        ));
    }
    Ok(())
}

/// Loss of `model` on `window` without gradients.
pub fn window_loss(model: &LatentModel, window: &Window, space: LossSpace, cfg: &LossConfig) -> Result<LossParts> {
    check_space(model, space)?;
    let mut g = Graph::new();
    let vars = model.bind(&mut g, space == LossSpace::Physical);
    Ok(build_loss(&mut g, &vars, model, window, space, cfg)?.1)
}

/// Loss and gradients, aligned with [`LatentModel::parameters`].
pub fn window_loss_and_grads(
    model: &LatentModel,
    window: &Window,
    space: LossSpace,
    cfg: &LossConfig,
) -> Result<(LossParts, Vec<Matrix>)> {
    check_space(model, space)?;
    let mut g = Graph::new();
    let vars = model.bind(&mut g, space == LossSpace::Physical);
    let (lv, parts) = build_loss(&mut g, &vars, model, window, space, cfg)?;
    let grads = g.backward(lv.total)?;
    Ok((parts, grads.collect(&g, &vars.params())?))
}

/// One-step end-to-end objective: prediction and reconstruction are both
/// measured after decoding, in normalized physical space.
pub fn loss_kae_onestep(model: &LatentModel, batch: &Window, cfg: &LossConfig) -> Result<LossParts> {
    if batch.steps() != 1 {
        return Err(Error::shape(format!("one-step batch has {} steps", batch.steps())));
    }
    window_loss(model, batch, LossSpace::Physical, cfg)
}

/// Unrolled objective summing the prediction error over every step of the
/// window.
pub fn loss_unrolled(model: &LatentModel, window: &Window, space: LossSpace, cfg: &LossConfig) -> Result<LossParts> {
    window_loss(model, window, space, cfg)
}
