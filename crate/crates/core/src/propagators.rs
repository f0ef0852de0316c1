//! Latent one-step maps `z_{k+1} = M(z_k, v_k, v_{k+1})`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{qr_solve_least_squares, spectral_radius, Matrix};
use crate::nn::{Graph, Mlp, MlpVars, Var};

/// Latent dimensions: `state` for `z`, `forcing` for each of `v_k`, `v_{k+1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentSpec {
    pub state: usize,
    pub forcing: usize,
}

impl LatentSpec {
    pub fn input_dim(&self) -> usize {
        self.state + 2 * self.forcing
    }
}

/// `z′ = A [z; v; v′]` with `A = [A_zz | A_vz | A_v′z]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearPropagator {
    pub a: Matrix,
    pub latent: LatentSpec,
}

/// Koopman matrix `C_f`, same layout as [`LinearPropagator`].
#[derive(Clone, Debug, PartialEq)]
pub struct KoopmanOperator {
    pub c_f: Matrix,
    pub latent: LatentSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpPropagator {
    pub net: Mlp,
    pub latent: LatentSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Propagator {
    Linear(LinearPropagator),
    Koopman(KoopmanOperator),
    Mlp(MlpPropagator),
}

fn check_operator(m: &Matrix, latent: LatentSpec) -> Result<()> {
    if m.shape() != (latent.state, latent.input_dim()) {
        return Err(Error::shape(format!(
            "operator {:?} does not match latent dims {latent:?}",
            m.shape()
        )));
    }
    if !m.all_finite() {
        return Err(Error::NonFinite("propagator operator".into()));
    }
    Ok(())
}

impl LinearPropagator {
    pub fn new(a: Matrix, latent: LatentSpec) -> Result<Self> {
        check_operator(&a, latent)?;
        Ok(Self { a, latent })
    }
}

impl KoopmanOperator {
    pub fn new(c_f: Matrix, latent: LatentSpec) -> Result<Self> {
        check_operator(&c_f, latent)?;
        Ok(Self { c_f, latent })
    }
}

impl MlpPropagator {
    pub fn new(net: Mlp, latent: LatentSpec) -> Result<Self> {
        if net.in_dim() != latent.input_dim() || net.out_dim() != latent.state {
            return Err(Error::shape(format!(
                "MLP {}->{} does not match latent dims {latent:?}",
                net.in_dim(),
                net.out_dim()
            )));
        }
        Ok(Self { net, latent })
    }
}

/// Least-squares fit of `X′ ≈ A [X; U; U′]`.
pub fn ols_fit(x: &Matrix, u: &Matrix, u_next: &Matrix, x_next: &Matrix) -> Result<LinearPropagator> {
    let n = x.cols();
    if u.cols() != n || u_next.cols() != n || x_next.cols() != n {
        return Err(Error::shape("ols_fit: column counts differ"));
    }
    if u.rows() != u_next.rows() || x.rows() != x_next.rows() {
        return Err(Error::shape("ols_fit: row counts differ"));
    }
    let design = Matrix::vstack(&[x, u, u_next])?;
    let at = qr_solve_least_squares(&design.transpose(), &x_next.transpose())?;
    LinearPropagator::new(
        at.transpose(),
        LatentSpec {
            state: x.rows(),
            forcing: u.rows(),
        },
    )
}

impl Propagator {
    pub fn latent(&self) -> LatentSpec {
        match self {
            Propagator::Linear(p) => p.latent,
            Propagator::Koopman(p) => p.latent,
            Propagator::Mlp(p) => p.latent,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Propagator::Linear(_) => "linear",
            Propagator::Koopman(_) => "koopman",
            Propagator::Mlp(_) => "mlp",
        }
    }

    /// The operator matrix of linear kinds.
    pub fn operator(&self) -> Option<&Matrix> {
        match self {
            Propagator::Linear(p) => Some(&p.a),
            Propagator::Koopman(p) => Some(&p.c_f),
            Propagator::Mlp(_) => None,
        }
    }

    fn operator_mut(&mut self) -> Option<&mut Matrix> {
        match self {
            Propagator::Linear(p) => Some(&mut p.a),
            Propagator::Koopman(p) => Some(&mut p.c_f),
            Propagator::Mlp(_) => None,
        }
    }

    /// One step for a batch of columns: `z [Ñx×n]`, `v`, `v′ [Ñu×n]`.
    pub fn step(&self, z: &Matrix, v: &Matrix, v_next: &Matrix) -> Result<Matrix> {
        let l = self.latent();
        if z.rows() != l.state || v.rows() != l.forcing || v_next.rows() != l.forcing {
            return Err(Error::shape(format!(
                "step inputs {:?}, {:?}, {:?} for latent dims {l:?}",
                z.shape(),
                v.shape(),
                v_next.shape()
            )));
        }
        if v.cols() != z.cols() || v_next.cols() != z.cols() {
            return Err(Error::shape("step inputs have different batch sizes"));
        }
        let input = Matrix::vstack(&[z, v, v_next])?;
        match self {
            Propagator::Mlp(p) => Ok(p.net.forward(&input.transpose())?.transpose()),
            _ => self.operator().expect("linear kind").matmul(&input),
        }
    }

    /// Square block acting on the latent state.
    pub fn inner_block(&self) -> Result<Matrix> {
        let op = self.operator().ok_or(Error::UnsupportedPropagator("MLP"))?;
        Ok(op.slice_cols(0..self.latent().state))
    }

    /// Largest eigenvalue magnitude of the inner block.
    pub fn inner_spectral_radius(&self) -> Result<f64> {
        spectral_radius(&self.inner_block()?)
    }

    pub fn parameters(&self) -> Vec<&Matrix> {
        match self {
            Propagator::Mlp(p) => p.net.parameters(),
            _ => vec![self.operator().expect("linear kind")],
        }
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        if let Propagator::Mlp(p) = self {
            return p.net.parameters_mut();
        }
        vec![self.operator_mut().expect("linear kind")]
    }

    pub fn bind(&self, g: &mut Graph) -> PropagatorVars {
        match self {
            Propagator::Mlp(p) => PropagatorVars::Mlp(p.net.bind(g)),
            _ => PropagatorVars::Linear {
                op: g.param(self.operator().expect("linear kind")),
                state_dim: self.latent().state,
            },
        }
    }
}

/// A propagator bound to a graph, acting on rows `[z | v | v′]`.
#[derive(Clone, Debug)]
pub enum PropagatorVars {
    Linear { op: Var, state_dim: usize },
    Mlp(MlpVars),
}

impl PropagatorVars {
    pub fn step(&self, g: &mut Graph, z: Var, v: Var, v_next: Var) -> Result<Var> {
        let input = g.hcat(&[z, v, v_next])?;
        match self {
            PropagatorVars::Linear { op, .. } => g.matmul_t(input, *op),
            PropagatorVars::Mlp(net) => net.forward(g, input),
        }
    }

    /// Inner square block, for the eigenvalue penalty.
    pub fn inner_block(&self, g: &mut Graph) -> Result<Var> {
        match self {
            PropagatorVars::Linear { op, state_dim } => g.slice_cols(*op, 0, *state_dim),
            PropagatorVars::Mlp(_) => Err(Error::UnsupportedPropagator("MLP")),
        }
    }

    pub fn params(&self) -> Vec<Var> {
        match self {
            PropagatorVars::Linear { op, .. } => vec![*op],
            PropagatorVars::Mlp(net) => net.params(),
        }
    }
}
