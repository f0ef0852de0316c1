use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{spectral_radius, Matrix};
use crate::rng::{derive_seed, gaussian_matrix, seeded, RomRng};

use super::dataset::{Dataset, VariableBlock, VariableKind};

/// Linear forced system `x_{k+1} = A x_k + B u_k + B′ u_{k+1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearSpec {
    pub n_x: usize,
    pub n_u: usize,
    pub n_t: usize,
    pub spectral_radius: f64,
    pub forcing_amplitude: f64,
    pub x0_scale: f64,
    /// Sinusoids per forcing channel; by default enough to excite every
    /// direction of `[x; u; u′]`.
    pub n_harmonics: Option<usize>,
    /// Permits a spectral radius above 1 (unstable systems for
    /// stabilization experiments).
    pub allow_unstable: bool,
    pub dt_seconds: f64,
}

impl Default for LinearSpec {
    fn default() -> Self {
        Self {
            n_x: 8,
            n_u: 2,
            n_t: 1000,
            spectral_radius: 0.95,
            forcing_amplitude: 1.0,
            x0_scale: 1.0,
            n_harmonics: None,
            allow_unstable: false,
            dt_seconds: 1.0,
        }
    }
}

impl LinearSpec {
    pub fn validate(&self) -> Result<()> {
        let rho = self.spectral_radius;
        let upper_ok = rho <= 1.0 || self.allow_unstable;
        if !(rho > 0.0 && rho.is_finite() && upper_ok) {
            return Err(Error::InvalidParam(format!(
                "spectral_radius {rho} must lie in (0, 1]"
            )));
        }
        if self.n_x == 0 || self.n_u == 0 {
            return Err(Error::InvalidParam("n_x and n_u must be positive".into()));
        }
        let min_t = 10 * (self.n_x + 2 * self.n_u);
        if self.n_t < min_t {
            return Err(Error::InvalidParam(format!(
                "n_t = {} is below 10·(n_x + 2·n_u) = {min_t}",
                self.n_t
            )));
        }
        if !(self.dt_seconds > 0.0) || self.forcing_amplitude < 0.0 || self.x0_scale < 0.0 {
            return Err(Error::InvalidParam("dt, amplitudes must be non-negative".into()));
        }
        Ok(())
    }

    fn harmonics(&self) -> usize {
        self.n_harmonics
            .unwrap_or((self.n_x + 2 * self.n_u).div_ceil(self.n_u) + 2)
            .max(1)
    }
}

/// Generating operators of a linear dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearTruth {
    pub a: Matrix,
    pub b: Matrix,
    pub b_next: Matrix,
}

impl LinearTruth {
    pub fn step(&self, x: &[f64], u: &[f64], u_next: &[f64]) -> Result<Vec<f64>> {
        let ax = self.a.matvec(x)?;
        let bu = self.b.matvec(u)?;
        let bn = self.b_next.matvec(u_next)?;
        Ok(ax
            .iter()
            .zip(&bu)
            .zip(&bn)
            .map(|((p, q), r)| p + q + r)
            .collect())
    }

    /// Operators side by side, `[A | B | B′]`.
    pub fn stacked(&self) -> Matrix {
        Matrix::hstack(&[&self.a, &self.b, &self.b_next]).expect("operator rows agree")
    }
}

fn sinusoid_forcing(rng: &mut RomRng, n_u: usize, n_t: usize, harmonics: usize, amplitude: f64) -> Matrix {
    let mut u = Matrix::zeros(n_u, n_t);
    for ch in 0..n_u {
        let terms: Vec<(f64, f64, f64)> = (0..harmonics)
            .map(|_| {
                let f = rng.random_range(0.002..0.2);
                let a = rng.random_range(0.5..1.0) / (harmonics as f64).sqrt();
                let phase = rng.random_range(0.0..TAU);
                (f, a, phase)
            })
            .collect();
        for k in 0..n_t {
            let t = k as f64;
            u[(ch, k)] = amplitude
                * terms
                    .iter()
                    .map(|&(f, a, p)| a * (TAU * f * t + p).sin())
                    .sum::<f64>();
        }
    }
    u
}

/// Simulates a random linear forced system. The state block is named `x`
/// and the forcing block `u`.
pub fn gen_linear_forced(spec: &LinearSpec, seed: u64) -> Result<(Dataset, LinearTruth)> {
    spec.validate()?;
    let (n_x, n_u, n_t) = (spec.n_x, spec.n_u, spec.n_t);

    let mut op_rng = seeded(derive_seed(seed, 1));
    let g = gaussian_matrix(&mut op_rng, n_x, n_x);
    let rho = spectral_radius(&g)?;
    let a = g.scale(spec.spectral_radius / rho);
    let b = gaussian_matrix(&mut op_rng, n_x, n_u).scale(1.0 / (n_u as f64).sqrt());
    let b_next = gaussian_matrix(&mut op_rng, n_x, n_u).scale(0.5 / (n_u as f64).sqrt());
    let truth = LinearTruth { a, b, b_next };

    let mut f_rng = seeded(derive_seed(seed, 2));
    let u = sinusoid_forcing(&mut f_rng, n_u, n_t, spec.harmonics(), spec.forcing_amplitude);

    let mut x0_rng = seeded(derive_seed(seed, 3));
    let mut x = Matrix::zeros(n_x, n_t);
    x.set_col(0, &gaussian_matrix(&mut x0_rng, n_x, 1).scale(spec.x0_scale).into_vec());
    for k in 0..n_t - 1 {
        let next = truth.step(&x.col(k), &u.col(k), &u.col(k + 1))?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("linear trajectory at step {}", k + 1)));
        }
        x.set_col(k + 1, &next);
    }

    let mut d = Dataset::new(
        vec![
            VariableBlock::new("x", VariableKind::State, x, "1"),
            VariableBlock::new("u", VariableKind::Forcing, u, "1"),
        ],
        spec.dt_seconds,
    )?;
    d.generator = Some(serde_json::json!({
        "kind": "linear",
        "spec": spec,
        "seed": seed,
    }));
    Ok((d, truth))
}
