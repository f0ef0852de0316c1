use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{uniform_matrix, RomRng};

use super::graph::{Graph, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

/// `y = x·Wᵀ + b` on a batch of rows. The bias is kept as a `1×out` row.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineLayer {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl AffineLayer {
    pub fn new(weight: Matrix, bias: Matrix) -> Result<Self> {
        if bias.rows() != 1 || bias.cols() != weight.rows() {
            return Err(Error::shape(format!(
                "bias {:?} for weight {:?}",
                bias.shape(),
                weight.shape()
            )));
        }
        if !weight.all_finite() || !bias.all_finite() {
            return Err(Error::NonFinite("affine layer parameters".into()));
        }
        Ok(Self { weight, bias })
    }

    /// Weights ~ Uniform(±1/√fan_in), bias 0.
    pub fn init(in_dim: usize, out_dim: usize, rng: &mut RomRng) -> Self {
        let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
        Self {
            weight: uniform_matrix(rng, out_dim, in_dim, -bound, bound),
            bias: Matrix::zeros(1, out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.in_dim() {
            return Err(Error::shape(format!(
                "layer expects {} inputs, got {:?}",
                self.in_dim(),
                x.shape()
            )));
        }
        let mut y = x.matmul_t(&self.weight)?;
        let b = self.bias.row(0);
        for i in 0..y.rows() {
            for (v, bj) in y.row_mut(i).iter_mut().zip(b) {
                *v += bj;
            }
        }
        Ok(y)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<AffineLayer>,
    pub activation: Activation,
}

impl Mlp {
    pub fn new(layers: Vec<AffineLayer>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::shape("an MLP needs at least one layer"));
        }
        for w in layers.windows(2) {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(Error::shape(format!(
                    "layer dims do not chain: {} -> {}",
                    w[0].out_dim(),
                    w[1].in_dim()
                )));
            }
        }
        Ok(Self { layers, activation })
    }

    /// Randomly initialized net with layer widths `dims` (`dims.len() ≥ 2`).
    pub fn init(dims: &[usize], activation: Activation, rng: &mut RomRng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::shape("an MLP needs at least input and output dims"));
        }
        let layers = dims.windows(2).map(|w| AffineLayer::init(w[0], w[1], rng)).collect();
        Self::new(layers, activation)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            layers: vec![AffineLayer {
                weight: Matrix::identity(n),
                bias: Matrix::zeros(1, n),
            }],
            activation: Activation::Identity,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Forward pass on `x [batch×in]`; the activation is applied between
    /// layers, never after the last.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut h = self.layers[0].forward(x)?;
        for layer in &self.layers[1..] {
            if self.activation == Activation::Relu {
                h = h.map(|v| if v > 0.0 { v } else { 0.0 });
            }
            h = layer.forward(&h)?;
        }
        Ok(h)
    }

    /// Parameters in the fixed order `[W0, b0, W1, b1, ...]`.
    pub fn parameters(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.parameters().iter().map(|p| p.rows() * p.cols()).sum()
    }

    /// Registers the parameters on `g` so the net can be applied inside a
    /// differentiable composition.
    pub fn bind(&self, g: &mut Graph) -> MlpVars {
        MlpVars {
            layers: self
                .layers
                .iter()
                .map(|l| (g.param(&l.weight), g.param(&l.bias)))
                .collect(),
            activation: self.activation,
        }
    }
}

/// An [`Mlp`] whose parameters live on a [`Graph`].
#[derive(Clone, Debug)]
pub struct MlpVars {
    layers: Vec<(Var, Var)>,
    activation: Activation,
}

impl MlpVars {
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            if i > 0 && self.activation == Activation::Relu {
                h = g.relu(h)?;
            }
            h = g.matmul_t(h, w)?;
            h = g.add_row(h, b)?;
        }
        Ok(h)
    }

    /// Same order as [`Mlp::parameters`].
    pub fn params(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }
}
