use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{derive_seed, seeded};

use super::dataset::{Dataset, VariableBlock, VariableKind};

const CFL_LIMIT: f64 = 0.9;

/// Left-boundary inflow: mean plus random sinusoids plus piecewise-linear
/// noise through Gaussian knots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundarySpec {
    pub mean: f64,
    pub n_harmonics: usize,
    /// Total amplitude shared by the sinusoids.
    pub amplitude: f64,
    /// Frequency range in cycles per unit time.
    pub min_frequency: f64,
    pub max_frequency: f64,
    pub noise_std: f64,
    /// Time between noise knots.
    pub noise_spacing: f64,
}

impl Default for BoundarySpec {
    fn default() -> Self {
        Self {
            mean: 1.0,
            n_harmonics: 3,
            amplitude: 0.4,
            min_frequency: 0.1,
            max_frequency: 1.0,
            noise_std: 0.05,
            noise_spacing: 0.25,
        }
    }
}

/// A concrete boundary signal drawn from a [`BoundarySpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct BoundarySignal {
    mean: f64,
    sinusoids: Vec<(f64, f64, f64)>,
    knots: Vec<f64>,
    spacing: f64,
}

impl BoundarySignal {
    pub fn draw(spec: &BoundarySpec, t_end: f64, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let h = spec.n_harmonics;
        let sinusoids = (0..h)
            .map(|_| {
                let f = rng.random_range(spec.min_frequency..=spec.max_frequency);
                let phase = rng.random_range(0.0..TAU);
                (f, spec.amplitude / h as f64, phase)
            })
            .collect();
        let n_knots = if spec.noise_std > 0.0 {
            (t_end / spec.noise_spacing).ceil() as usize + 2
        } else {
            0
        };
        let knots = (0..n_knots)
            .map(|_| spec.noise_std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self {
            mean: spec.mean,
            sinusoids,
            knots,
            spacing: spec.noise_spacing,
        }
    }

    pub fn constant(value: f64) -> Self {
        Self {
            mean: value,
            sinusoids: Vec::new(),
            knots: Vec::new(),
            spacing: 1.0,
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        let mut v = self.mean;
        for &(f, a, p) in &self.sinusoids {
            v += a * (TAU * f * t + p).sin();
        }
        if self.knots.len() >= 2 {
            let s = (t / self.spacing).max(0.0);
            let i = (s.floor() as usize).min(self.knots.len() - 2);
            let w = (s - i as f64).min(1.0);
            v += (1.0 - w) * self.knots[i] + w * self.knots[i + 1];
        }
        v
    }

    /// Upper bound on `|value(t)|` over all t.
    pub fn bound(&self) -> f64 {
        self.mean.abs()
            + self.sinusoids.iter().map(|s| s.1.abs()).sum::<f64>()
            + self.knots.iter().fold(0.0f64, |m, k| m.max(k.abs()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BurgersSpec {
    pub n_cells: usize,
    /// Recorded snapshots, including the initial condition.
    pub n_t: usize,
    pub viscosity: f64,
    /// Solver time step.
    pub dt: f64,
    /// Solver steps between recorded snapshots.
    pub substeps: usize,
    /// Initial condition: Gaussian bump of this height centred at 0.3.
    pub initial_amplitude: f64,
    pub boundary: BoundarySpec,
}

impl Default for BurgersSpec {
    fn default() -> Self {
        Self {
            n_cells: 128,
            n_t: 4000,
            viscosity: 0.003,
            dt: 0.002,
            substeps: 5,
            initial_amplitude: 0.0,
            boundary: BoundarySpec::default(),
        }
    }
}

impl BurgersSpec {
    pub fn dx(&self) -> f64 {
        1.0 / self.n_cells as f64
    }

    /// `dt·(max|u|/dx + 2ν/dx²)` for a given velocity bound.
    pub fn cfl_factor(&self, max_speed: f64) -> f64 {
        let dx = self.dx();
        self.dt * (max_speed / dx + 2.0 * self.viscosity / (dx * dx))
    }

    pub fn initial_condition(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.n_cells)
            .map(|i| {
                let x = (i as f64 + 0.5) * dx;
                self.initial_amplitude * (-((x - 0.3) / 0.08).powi(2)).exp()
            })
            .collect()
    }

    /// The boundary signal a run with `seed` uses.
    pub fn boundary_signal(&self, seed: u64) -> BoundarySignal {
        let t_end = self.dt * (self.substeps * self.n_t) as f64;
        BoundarySignal::draw(&self.boundary, t_end, derive_seed(seed, 11))
    }

    fn validate(&self) -> Result<()> {
        if self.n_cells < 32 {
            return Err(Error::InvalidParam(format!("n_cells {} < 32", self.n_cells)));
        }
        if self.n_t < 2 || self.substeps == 0 {
            return Err(Error::InvalidParam("n_t must be ≥ 2 and substeps ≥ 1".into()));
        }
        if !(self.dt > 0.0) || self.viscosity < 0.0 {
            return Err(Error::InvalidParam("dt must be positive, viscosity non-negative".into()));
        }
        let b = &self.boundary;
        if !(b.min_frequency <= b.max_frequency) || (b.noise_std > 0.0 && !(b.noise_spacing > 0.0)) {
            return Err(Error::InvalidParam("boundary frequency range or noise spacing".into()));
        }
        Ok(())
    }
}

/// One explicit Euler step of viscous Burgers on interior cells: upwind
/// convection by local sign, central diffusion, Dirichlet inflow `left`,
/// zero-gradient outflow.
pub fn burgers_step(u: &[f64], left: f64, viscosity: f64, dt: f64, dx: f64) -> Vec<f64> {
    let n = u.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let ui = u[i];
        let um = if i == 0 { left } else { u[i - 1] };
        let up = if i + 1 == n { ui } else { u[i + 1] };
        let conv = if ui > 0.0 {
            ui * (ui - um) / dx
        } else {
            ui * (up - ui) / dx
        };
        let diff = viscosity * (up - 2.0 * ui + um) / (dx * dx);
        out[i] = ui + dt * (diff - conv);
    }
    out
}

/// Simulates the forced Burgers problem with a given boundary signal.
pub fn simulate_burgers(spec: &BurgersSpec, signal: &BoundarySignal) -> Result<(Matrix, Matrix)> {
    spec.validate()?;
    let x0 = spec.initial_condition();
    let max_speed = signal.bound().max(x0.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let factor = spec.cfl_factor(max_speed);
    if factor > CFL_LIMIT {
        return Err(Error::Cfl { factor });
    }
    let dx = spec.dx();
    let mut state = Matrix::zeros(spec.n_cells, spec.n_t);
    let mut forcing = Matrix::zeros(1, spec.n_t);
    let mut u = x0;
    let mut step = 0usize;
    for k in 0..spec.n_t {
        state.set_col(k, &u);
        forcing[(0, k)] = signal.value(step as f64 * spec.dt);
        if k + 1 == spec.n_t {
            break;
        }
        for _ in 0..spec.substeps {
            let g = signal.value(step as f64 * spec.dt);
            u = burgers_step(&u, g, spec.viscosity, spec.dt, dx);
            step += 1;
        }
    }
    Ok((state, forcing))
}

/// Viscous Burgers benchmark. The interior velocity is the state block `u`;
/// the inflow boundary value is the forcing block `g`.
pub fn gen_burgers_forced(spec: &BurgersSpec, seed: u64) -> Result<Dataset> {
    let signal = spec.boundary_signal(seed);
    let (state, forcing) = simulate_burgers(spec, &signal)?;
    let mut d = Dataset::new(
        vec![
            VariableBlock::new("u", VariableKind::State, state, "m/s"),
            VariableBlock::new("g", VariableKind::Forcing, forcing, "m/s"),
        ],
        spec.dt * spec.substeps as f64,
    )?;
    d.generator = Some(serde_json::json!({
        "kind": "burgers",
        "spec": spec,
        "seed": seed,
    }));
    Ok(d)
}
