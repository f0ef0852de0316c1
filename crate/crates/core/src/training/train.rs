use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autoencoders::{pod_fit_with, AutoencoderStack, Coder, CoderGroup, NeuralCoder};
use crate::data::{normalize, Dataset, NormStats, VariableKind};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{Activation, EarlyStopDecision, EarlyStopState, Mlp, OptimizerState, SchedulerState};
use crate::propagators::{ols_fit, KoopmanOperator, LatentSpec, LinearPropagator, MlpPropagator, Propagator};
use crate::rng::{derive_seed, seeded, uniform_matrix, RomRng};
use crate::surrogate::{Provenance, Surrogate};

use super::config::{Family, LossConfig, TrainConfig, UnrollConfig};
use super::loss::{window_loss, window_loss_and_grads, LossParts, LossSpace, Window};
use super::model::LatentModel;
use super::unroll::{make_unroll_batches, window_starts};

/// Variables sharing one coder and its latent size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub variables: Vec<String>,
    pub latent_dim: usize,
    /// Hidden widths of a nonlinear coder (KAE only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<usize>>,
}

/// Layout of the autoencoder stacks and the latent propagator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackSpec {
    pub state_groups: Vec<GroupSpec>,
    pub forcing_groups: Vec<GroupSpec>,
    #[serde(default = "yes")]
    pub normalize: bool,
    #[serde(default = "yes")]
    pub pod_centering: bool,
    /// Hidden widths of the PODMLP propagator; defaults to two layers of the
    /// propagator input width.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub propagator_hidden: Option<Vec<usize>>,
}

fn yes() -> bool {
    true
}

impl StackSpec {
    /// One group per kind holding every variable of that kind.
    pub fn single(d: &Dataset, state_latent: usize, forcing_latent: usize) -> Self {
        let group = |kind, latent_dim| GroupSpec {
            variables: d.names_of(kind),
            latent_dim,
            hidden: None,
        };
        Self {
            state_groups: vec![group(VariableKind::State, state_latent)],
            forcing_groups: vec![group(VariableKind::Forcing, forcing_latent)],
            normalize: true,
            pod_centering: true,
            propagator_hidden: None,
        }
    }

    pub fn latent(&self) -> LatentSpec {
        LatentSpec {
            state: self.state_groups.iter().map(|g| g.latent_dim).sum(),
            forcing: self.forcing_groups.iter().map(|g| g.latent_dim).sum(),
        }
    }

    pub fn validate(&self, d: &Dataset) -> Result<()> {
        for (field, groups, kind) in [
            ("stack.state_groups", &self.state_groups, VariableKind::State),
            ("stack.forcing_groups", &self.forcing_groups, VariableKind::Forcing),
        ] {
            if groups.is_empty() {
                return Err(Error::config(field, "needs at least one group"));
            }
            let mut seen: Vec<&str> = Vec::new();
            for (gi, g) in groups.iter().enumerate() {
                let path = format!("{field}[{gi}]");
                if g.variables.is_empty() {
                    return Err(Error::config(format!("{path}.variables"), "empty group"));
                }
                if g.latent_dim == 0 {
                    return Err(Error::config(format!("{path}.latent_dim"), "must be positive"));
                }
                if g.hidden.as_ref().is_some_and(|h| h.contains(&0)) {
                    return Err(Error::config(format!("{path}.hidden"), "widths must be positive"));
                }
                for v in &g.variables {
                    let b = d.block(v).map_err(|_| {
                        Error::config(format!("{path}.variables"), format!("no variable `{v}` in the dataset"))
                    })?;
                    if b.kind != kind {
                        return Err(Error::config(format!("{path}.variables"), format!("`{v}` is a {:?} variable", b.kind)));
                    }
                    if seen.contains(&v.as_str()) {
                        return Err(Error::config(format!("{path}.variables"), format!("`{v}` is listed twice")));
                    }
                    seen.push(v);
                }
            }
            for name in d.names_of(kind) {
                if !seen.contains(&name.as_str()) {
                    return Err(Error::config(field, format!("variable `{name}` belongs to no group")));
                }
            }
        }
        if self.propagator_hidden.as_ref().is_some_and(|h| h.contains(&0)) {
            return Err(Error::config("stack.propagator_hidden", "widths must be positive"));
        }
        Ok(())
    }
}

/// One line of the JSON-lines training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_total: f64,
    pub train_pred: f64,
    pub train_recon: f64,
    pub train_eig: f64,
    pub val_loss: f64,
    pub lr: f64,
    pub spectral_radius: Option<f64>,
}

pub fn log_to_jsonl(log: &[EpochLog]) -> String {
    let mut s = String::new();
    for e in log {
        s.push_str(&serde_json::to_string(e).expect("log entries serialize"));
        s.push('\n');
    }
    s
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub surrogate: Surrogate,
    pub log: Vec<EpochLog>,
    pub epochs: usize,
    pub stopped_early: bool,
    /// One-step prediction MSE on the validation period in normalized
    /// physical space; comparable across families.
    pub val_physical_mse: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Time series in row layout (`n_time × dim`).
struct Series {
    states: Matrix,
    forcings: Matrix,
}

impl Series {
    fn rows(&self, range: std::ops::Range<usize>) -> Series {
        Series {
            states: self.states.slice_rows(range.clone()),
            forcings: self.forcings.slice_rows(range),
        }
    }

    fn len(&self) -> usize {
        self.states.rows()
    }

    fn window(&self, starts: &[usize], steps: usize) -> Result<Window> {
        Window::gather(&self.states, &self.forcings, starts, steps)
    }

    /// Every window of `steps` (shortened to fit) as one batch.
    fn all_windows(&self, steps: usize) -> Result<Option<Window>> {
        if self.len() < 2 {
            return Ok(None);
        }
        let steps = steps.min(self.len() - 1);
        let starts = window_starts(self.len(), &UnrollConfig { steps, window_stride: 1 });
        self.window(&starts, steps).map(Some)
    }
}

fn gather_group(d: &Dataset, vars: &[String]) -> Result<Matrix> {
    let parts = vars.iter().map(|v| Ok(&d.block(v)?.values)).collect::<Result<Vec<_>>>()?;
    Matrix::vstack(&parts)
}

fn group_sizes(d: &Dataset, g: &GroupSpec) -> Result<Vec<(String, usize)>> {
    g.variables.iter().map(|v| Ok((v.clone(), d.block(v)?.n_space()))).collect()
}

fn pod_stack(d: &Dataset, groups: &[GroupSpec], centered: bool, seed: u64, stream: u64) -> Result<AutoencoderStack> {
    let train = d.split.train();
    let mut out = Vec::with_capacity(groups.len());
    for (gi, g) in groups.iter().enumerate() {
        let x = gather_group(d, &g.variables)?.slice_cols(train.clone());
        let basis = pod_fit_with(&x, g.latent_dim, derive_seed(seed, stream + gi as u64), centered)?;
        out.push(CoderGroup {
            variables: group_sizes(d, g)?,
            coder: Coder::Pod(basis),
        });
    }
    AutoencoderStack::new(out)
}

fn neural_stack(
    d: &Dataset,
    groups: &[GroupSpec],
    with_decoder: bool,
    default_hidden: impl Fn(&GroupSpec) -> Option<Vec<usize>>,
    rng: &mut RomRng,
) -> Result<AutoencoderStack> {
    let mut out = Vec::with_capacity(groups.len());
    for g in groups {
        let variables = group_sizes(d, g)?;
        let in_dim = variables.iter().map(|v| v.1).sum();
        let coder = match g.hidden.clone().or_else(|| default_hidden(g)) {
            Some(h) if !h.is_empty() => NeuralCoder::mlp(in_dim, &h, g.latent_dim, with_decoder, rng)?,
            _ => NeuralCoder::linear(in_dim, g.latent_dim, with_decoder, rng)?,
        };
        out.push(CoderGroup {
            variables,
            coder: Coder::Neural(coder),
        });
    }
    AutoencoderStack::new(out)
}

fn uniform_operator(latent: LatentSpec, rng: &mut RomRng) -> Matrix {
    let k = 1.0 / (latent.input_dim() as f64).sqrt();
    uniform_matrix(rng, latent.state, latent.input_dim(), -k, k)
}

/// Untrained model of `family`: POD bases fitted on the training period,
/// neural weights and operators drawn from `seed`. Expects `d` already
/// normalized the way training would.
pub fn initial_model(family: Family, d: &Dataset, spec: &StackSpec, seed: u64) -> Result<LatentModel> {
    let mut rng = seeded(derive_seed(seed, 200));
    let (state_stack, forcing_stack) = if family.is_pod() {
        (
            pod_stack(d, &spec.state_groups, spec.pod_centering, seed, 100)?,
            pod_stack(d, &spec.forcing_groups, spec.pod_centering, seed, 150)?,
        )
    } else {
        let kae = family == Family::Kae;
        let state = neural_stack(d, &spec.state_groups, true, |_| None, &mut rng)?;
        let forcing = neural_stack(
            d,
            &spec.forcing_groups,
            false,
            |g| kae.then(|| vec![2 * g.latent_dim]),
            &mut rng,
        )?;
        (state, forcing)
    };
    let latent = LatentSpec {
        state: state_stack.latent_dim(),
        forcing: forcing_stack.latent_dim(),
    };
    let propagator = match family {
        Family::Podlr | Family::Podlrt => Propagator::Linear(LinearPropagator::new(uniform_operator(latent, &mut rng), latent)?),
        Family::Podmlp => {
            let n = latent.input_dim();
            let hidden = spec.propagator_hidden.clone().unwrap_or_else(|| vec![n, n]);
            let mut dims = vec![n];
            dims.extend(hidden);
            dims.push(latent.state);
            Propagator::Mlp(MlpPropagator::new(Mlp::init(&dims, Activation::Relu, &mut rng)?, latent)?)
        }
        Family::Lkae | Family::Kae => Propagator::Koopman(KoopmanOperator::new(uniform_operator(latent, &mut rng), latent)?),
    };
    LatentModel::new(state_stack, forcing_stack, propagator)
}

fn physical_series(d: &Dataset, model: &LatentModel) -> Result<Series> {
    Ok(Series {
        states: model.state_stack.gather(&d.blocks)?.transpose(),
        forcings: model.forcing_stack.gather(&d.blocks)?.transpose(),
    })
}

fn latent_series(phys: &Series, model: &LatentModel) -> Result<Series> {
    Ok(Series {
        states: model.state_stack.encode_stacked(&phys.states.transpose())?.transpose(),
        forcings: model.forcing_stack.encode_stacked(&phys.forcings.transpose())?.transpose(),
    })
}

fn spectral_radius_of(model: &LatentModel) -> Option<f64> {
    match model.propagator {
        Propagator::Mlp(_) => None,
        _ => model.propagator.inner_spectral_radius().ok(),
    }
}

fn config_json(family: Family, spec: &StackSpec, cfg: &TrainConfig) -> Result<serde_json::Value> {
    let mut materialized = cfg.clone();
    materialized.loss = Some(cfg.loss_for(family));
    Ok(serde_json::json!({
        "family": family,
        "stack": spec,
        "train": materialized,
    }))
}

fn physical_one_step(model: &LatentModel, val: &Series) -> Result<f64> {
    let cfg = LossConfig {
        alpha_pred: 1.0,
        alpha_recon: 0.0,
        alpha_eig: 0.0,
    };
    match val.all_windows(1)? {
        Some(w) => Ok(window_loss(model, &w, LossSpace::Physical, &cfg)?.pred),
        None => Ok(f64::NAN),
    }
}

/// Trains a surrogate of `family` on `d`.
///
/// POD families fit their bases on the training period first; PODLR then
/// solves for the propagator in closed form, PODLRt and PODMLP train only the
/// propagator. LKAE and KAE train coders and operator jointly. Validation
/// windows come from the `[train_end, val_end)` tail and drive the LR
/// scheduler and early stopping.
pub fn train(family: Family, d: &Dataset, spec: &StackSpec, cfg: &TrainConfig) -> Result<TrainResult> {
    cfg.validate_for(family)?;
    spec.validate(d)?;
    d.validate()?;
    let (nd, norm) = if spec.normalize {
        normalize(d)?
    } else {
        (d.clone(), NormStats::identity(d))
    };
    let seed = cfg.seed;
    let loss_cfg = cfg.loss_for(family);
    let mut model = initial_model(family, &nd, spec, seed)?;

    let phys = physical_series(&nd, &model)?;
    let (space, series) = if family.is_pod() {
        (LossSpace::Latent, latent_series(&phys, &model)?)
    } else {
        (LossSpace::Physical, phys.rows(0..phys.len()))
    };
    let split = nd.split;
    let train_part = series.rows(0..split.train_end);
    let val_part = series.rows(split.val());
    let val_phys = phys.rows(split.val());

    let mut log = Vec::new();
    let mut epochs = 0;
    let mut stopped_early = false;

    if family == Family::Podlr {
        let (x, u) = (train_part.states.transpose(), train_part.forcings.transpose());
        let n = x.cols();
        if n < 2 {
            return Err(Error::EmptySplit("PODLR needs at least two training steps".into()));
        }
        let fitted = ols_fit(
            &x.slice_cols(0..n - 1),
            &u.slice_cols(0..n - 1),
            &u.slice_cols(1..n),
            &x.slice_cols(1..n),
        )?;
        model.propagator = Propagator::Linear(fitted);
    } else {
        let unroll = cfg.unroll.unwrap_or(UnrollConfig {
            steps: 1,
            window_stride: 1,
        });
        let val_window = val_part.all_windows(unroll.steps)?;
        let shapes: Vec<_> = model.parameters().iter().map(|p| p.shape()).collect();
        let mut opt = OptimizerState::new(cfg.optimizer.clone(), &shapes)?;
        let mut sched = SchedulerState::new(&cfg.scheduler);
        let mut stop = EarlyStopState::new(cfg.early_stop.tolerance, cfg.early_stop.patience);

        for epoch in 1..=cfg.max_epochs {
            let batches = make_unroll_batches(
                train_part.len(),
                &unroll,
                cfg.batch_size,
                derive_seed(seed, 1000 + epoch as u64),
            );
            if batches.is_empty() {
                return Err(Error::EmptySplit(format!(
                    "no {}-step training window fits in {} steps",
                    unroll.steps,
                    train_part.len()
                )));
            }
            let mut acc = LossParts::default();
            let mut count = 0usize;
            for starts in &batches {
                let w = train_part.window(starts, unroll.steps)?;
                let (parts, grads) = window_loss_and_grads(&model, &w, space, &loss_cfg)?;
                if !parts.total.is_finite() {
                    return Err(Error::TrainingDiverged { epoch });
                }
                let k = starts.len() as f64;
                acc.total += k * parts.total;
                acc.pred += k * parts.pred;
                acc.recon += k * parts.recon;
                acc.eig += k * parts.eig;
                count += starts.len();
                let mut params = model.parameters_mut();
                opt.step(&mut params, &grads).map_err(|e| match e {
                    Error::NonFiniteGradient { .. } | Error::NonFinite(_) => Error::TrainingDiverged { epoch },
                    other => other,
                })?;
            }
            let n = count as f64;
            let train_total = acc.total / n;
            let val_loss = match &val_window {
                Some(w) => window_loss(&model, w, space, &loss_cfg)?.total,
                None => train_total,
            };
            if !val_loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            let entry = EpochLog {
                epoch,
                train_total,
                train_pred: acc.pred / n,
                train_recon: acc.recon / n,
                train_eig: acc.eig / n,
                val_loss,
                lr: opt.lr,
                spectral_radius: spectral_radius_of(&model),
            };
            log::debug!("{family} epoch {epoch}: train {train_total:.6e} val {val_loss:.6e} lr {:.3e}", opt.lr);
            log.push(entry);
            epochs = epoch;
            opt.lr = sched.step(val_loss, opt.lr);
            if stop.step(val_loss) == EarlyStopDecision::Stop {
                stopped_early = true;
                break;
            }
        }
    }

    let val_physical_mse = physical_one_step(&model, &val_phys)?;
    let config = config_json(family, spec, cfg)?;
    let provenance = Provenance {
        family,
        config_hash: sha256_hex(serde_json::to_string(&config)?.as_bytes()),
        seed,
        log_digest: sha256_hex(log_to_jsonl(&log).as_bytes()),
        config,
    };
    Ok(TrainResult {
        surrogate: Surrogate {
            family,
            norm,
            model,
            provenance,
        },
        log,
        epochs,
        stopped_early,
        val_physical_mse,
    })
}
