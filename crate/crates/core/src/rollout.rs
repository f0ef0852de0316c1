//! Autoregressive inference with prescribed forcings.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::data::{VariableBlock, VariableKind};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::surrogate::Surrogate;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RolloutOptions {
    /// Decode after every step instead of once at the end. Outputs are
    /// identical; only memory and timing differ.
    pub decode_per_step: bool,
    pub keep_latent: bool,
}

/// First step whose latent state was not finite.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DivergenceFlag {
    pub step: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutResult {
    /// Physical predictions for steps `1..=n`, one `n_space × n` block per
    /// state variable. `n < horizon` only after divergence.
    pub states: Vec<VariableBlock>,
    /// Latent trajectory `[Ñx × (n+1)]` including the encoded initial state.
    pub latent: Option<Matrix>,
    pub duration: Duration,
    pub divergence: Option<DivergenceFlag>,
    /// RMSE between `x_0` and its decoded encoding, in physical units: the
    /// reconstruction floor separate from propagation error.
    pub initial_projection_rmse: f64,
}

impl RolloutResult {
    pub fn steps(&self) -> usize {
        self.states.first().map_or(0, |b| b.values.cols())
    }
}

fn check_columns(blocks: &[VariableBlock], need: usize, what: &str) -> Result<()> {
    for b in blocks {
        if b.values.cols() < need {
            return Err(Error::shape(format!(
                "{what} `{}` has {} columns, need {need}",
                b.name,
                b.values.cols()
            )));
        }
    }
    Ok(())
}

fn first_columns(blocks: &[VariableBlock], n: usize) -> Vec<VariableBlock> {
    blocks
        .iter()
        .map(|b| VariableBlock {
            values: b.values.slice_cols(0..n),
            ..b.clone()
        })
        .collect()
}

/// Runs the surrogate for `horizon` steps from `x0` (first column of each
/// state block). `forcings` must cover columns `0..=horizon`. The initial
/// state is encoded once and intermediate predictions are never re-encoded.
pub fn rollout(
    s: &Surrogate,
    x0: &[VariableBlock],
    forcings: &[VariableBlock],
    horizon: usize,
    opts: RolloutOptions,
) -> Result<RolloutResult> {
    let started = Instant::now();
    check_columns(x0, 1, "initial state")?;
    check_columns(forcings, horizon + 1, "forcing")?;
    let x0 = first_columns(x0, 1);
    let z0 = s.encode_state(&x0)?;
    let v = s.encode_forcing(&first_columns(forcings, horizon + 1))?;

    let recon = s.decode_state(&z0)?;
    let mut se = 0.0;
    let mut count = 0usize;
    for (name, m) in &recon {
        let truth = x0
            .iter()
            .find(|b| &b.name == name)
            .ok_or_else(|| Error::MissingVariable(name.clone()))?;
        for (a, b) in m.as_slice().iter().zip(truth.values.as_slice()) {
            se += (a - b) * (a - b);
        }
        count += m.as_slice().len();
    }
    let initial_projection_rmse = (se / count.max(1) as f64).sqrt();

    let nz = z0.rows();
    let mut traj = Matrix::zeros(nz, horizon + 1);
    traj.set_col(0, z0.as_slice());
    let mut z = z0;
    let mut per_step: Vec<Vec<(String, Matrix)>> = Vec::new();
    let mut divergence = None;
    let mut done = 0;
    for k in 0..horizon {
        let next = s.model.propagator.step(
            &z,
            &v.slice_cols(k..k + 1),
            &v.slice_cols(k + 1..k + 2),
        )?;
        if !next.all_finite() {
            divergence = Some(DivergenceFlag { step: k + 1 });
            log::warn!("rollout diverged at step {}", k + 1);
            break;
        }
        traj.set_col(k + 1, next.as_slice());
        if opts.decode_per_step {
            per_step.push(s.decode_state(&next)?);
        }
        z = next;
        done = k + 1;
    }

    let kinds = |name: &str| {
        x0.iter()
            .find(|b| b.name == name)
            .map(|b| (b.kind, b.units.clone()))
            .unwrap_or((VariableKind::State, String::new()))
    };
    let decoded: Vec<(String, Matrix)> = if opts.decode_per_step {
        let names: Vec<String> = recon.iter().map(|r| r.0.clone()).collect();
        names
            .iter()
            .enumerate()
            .map(|(vi, name)| {
                let n_space = recon[vi].1.rows();
                let mut m = Matrix::zeros(n_space, done);
                for (k, step) in per_step.iter().enumerate() {
                    m.set_col(k, step[vi].1.as_slice());
                }
                (name.clone(), m)
            })
            .collect()
    } else {
        s.decode_state(&traj.slice_cols(1..done + 1))?
    };
    let states = decoded
        .into_iter()
        .map(|(name, values)| {
            let (kind, units) = kinds(&name);
            VariableBlock::new(name, kind, values, units)
        })
        .collect();
    Ok(RolloutResult {
        states,
        latent: opts.keep_latent.then(|| traj.slice_cols(0..done + 1)),
        duration: started.elapsed(),
        divergence,
        initial_projection_rmse,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub steps: usize,
    pub seconds: f64,
    pub steps_per_second: f64,
    pub n_space: usize,
    pub environment: String,
}

pub fn environment_descriptor() -> String {
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!(
        "{}-{}, {cpus} logical cpus, single-threaded rollout",
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}

/// Times encode, `horizon` latent steps and a per-step decode into a
/// reused buffer, on a single thread. Inputs are zero fields of the
/// surrogate's own dimensions; `n_space` must equal its state size.
pub fn bench_inference(s: &Surrogate, horizon: usize, n_space: usize) -> Result<BenchReport> {
    let state_dim = s.model.state_stack.input_dim();
    if n_space != state_dim {
        return Err(Error::shape(format!(
            "bench asked for {n_space} state elements, surrogate has {state_dim}"
        )));
    }
    let zeros = |groups: &crate::autoencoders::AutoencoderStack, kind, cols| -> Vec<VariableBlock> {
        groups
            .groups
            .iter()
            .flat_map(|g| g.variables.iter())
            .map(|(name, size)| VariableBlock::new(name.clone(), kind, Matrix::zeros(*size, cols), ""))
            .collect()
    };
    let x0 = zeros(&s.model.state_stack, VariableKind::State, 1);
    let forcings = zeros(&s.model.forcing_stack, VariableKind::Forcing, horizon + 1);

    let started = Instant::now();
    let mut z = s.encode_state(&x0)?;
    let v = s.encode_forcing(&forcings)?;
    let mut sink = 0.0;
    for k in 0..horizon {
        z = s.model.propagator.step(&z, &v.slice_cols(k..k + 1), &v.slice_cols(k + 1..k + 2))?;
        let x = s.model.state_stack.decode_stacked(&z)?;
        sink += x.as_slice()[0];
    }
    let seconds = started.elapsed().as_secs_f64();
    std::hint::black_box(sink);
    Ok(BenchReport {
        steps: horizon,
        seconds,
        steps_per_second: if seconds > 0.0 { horizon as f64 / seconds } else { 0.0 },
        n_space,
        environment: environment_descriptor(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_linear_forced, LinearSpec};
    use crate::propagators::{LinearPropagator, Propagator};
    use crate::training::{train, Family, StackSpec, TrainConfig};

    fn fitted(seed: u64, r: usize) -> (Surrogate, crate::data::Dataset) {
        let spec = LinearSpec {
            n_x: 6,
            n_u: 2,
            n_t: 600,
            ..Default::default()
        };
        let d = gen_linear_forced(&spec, seed).unwrap().0;
        let stack = StackSpec::single(&d, r, 2);
        let s = train(Family::Podlr, &d, &stack, &TrainConfig::default()).unwrap().surrogate;
        (s, d)
    }

    #[test]
    fn identity_propagator_holds_projection() {
        let (mut s, d) = fitted(1, 3);
        let l = s.latent();
        let mut a = Matrix::zeros(l.state, l.input_dim());
        a.set_block(0, 0, &Matrix::identity(l.state));
        s.model.propagator = Propagator::Linear(LinearPropagator::new(a, l).unwrap());
        let r = rollout(&s, &d.blocks[..1], &d.blocks[1..], 20, RolloutOptions::default()).unwrap();
        let proj = s.decode_state(&s.encode_state(&d.blocks[..1]).unwrap().slice_cols(0..1)).unwrap();
        for k in 0..20 {
            assert_eq!(r.states[0].values.col(k), proj[0].1.col(0));
        }
        assert!(r.initial_projection_rmse > 0.0);
    }

    #[test]
    fn horizon_one_is_single_step_and_decode() {
        let (s, d) = fitted(2, 4);
        let r = rollout(&s, &d.blocks[..1], &d.blocks[1..], 1, RolloutOptions::default()).unwrap();
        let z0 = s.encode_state(&d.blocks[..1]).unwrap().slice_cols(0..1);
        let v = s.encode_forcing(&d.blocks[1..]).unwrap();
        let z1 = s.model.propagator.step(&z0, &v.slice_cols(0..1), &v.slice_cols(1..2)).unwrap();
        assert_eq!(r.states[0].values, s.decode_state(&z1).unwrap()[0].1);
        assert_eq!(r.steps(), 1);
    }

    #[test]
    fn per_step_decode_matches_decode_at_end() {
        let (s, d) = fitted(3, 3);
        let a = rollout(&s, &d.blocks[..1], &d.blocks[1..], 50, RolloutOptions::default()).unwrap();
        let b = rollout(
            &s,
            &d.blocks[..1],
            &d.blocks[1..],
            50,
            RolloutOptions {
                decode_per_step: true,
                keep_latent: true,
            },
        )
        .unwrap();
        assert_eq!(a.states, b.states);
        assert_eq!(b.latent.unwrap().cols(), 51);
    }

    #[test]
    fn divergence_is_flagged_with_partial_output() {
        let (mut s, d) = fitted(4, 3);
        let l = s.latent();
        let mut a = Matrix::zeros(l.state, l.input_dim());
        a.set_block(0, 0, &Matrix::identity(l.state).scale(1e200));
        s.model.propagator = Propagator::Linear(LinearPropagator::new(a, l).unwrap());
        let r = rollout(&s, &d.blocks[..1], &d.blocks[1..], 10, RolloutOptions::default()).unwrap();
        let flag = r.divergence.unwrap();
        assert!(flag.step >= 2 && flag.step <= 3);
        assert_eq!(r.steps(), flag.step - 1);
    }

    #[test]
    fn short_forcing_is_shape_error() {
        let (s, d) = fitted(5, 3);
        let short = first_columns(&d.blocks[1..], 5);
        assert!(matches!(
            rollout(&s, &d.blocks[..1], &short, 5, RolloutOptions::default()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn bench_zero_horizon() {
        let (s, _) = fitted(6, 3);
        let b = bench_inference(&s, 0, 6).unwrap();
        assert_eq!(b.steps, 0);
        assert!(b.seconds < 0.1);
        assert!(bench_inference(&s, 10, 7).is_err());
    }
}
