use crate::autoencoders::{AutoencoderStack, StackVars};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::Graph;
use crate::propagators::{LatentSpec, Propagator, PropagatorVars};

/// Encoders, decoder and latent propagator of a surrogate.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentModel {
    pub state_stack: AutoencoderStack,
    pub forcing_stack: AutoencoderStack,
    pub propagator: Propagator,
}

impl LatentModel {
    pub fn new(state_stack: AutoencoderStack, forcing_stack: AutoencoderStack, propagator: Propagator) -> Result<Self> {
        let expected = LatentSpec {
            state: state_stack.latent_dim(),
            forcing: forcing_stack.latent_dim(),
        };
        if propagator.latent() != expected {
            return Err(Error::shape(format!(
                "propagator latent dims {:?} do not match the stacks {expected:?}",
                propagator.latent()
            )));
        }
        Ok(Self {
            state_stack,
            forcing_stack,
            propagator,
        })
    }

    pub fn latent(&self) -> LatentSpec {
        self.propagator.latent()
    }

    /// Trainable tensors: state coders, forcing coders, then propagator.
    pub fn parameters(&self) -> Vec<&Matrix> {
        let mut p = self.state_stack.parameters();
        p.extend(self.forcing_stack.parameters());
        p.extend(self.propagator.parameters());
        p
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        let mut p = self.state_stack.parameters_mut();
        p.extend(self.forcing_stack.parameters_mut());
        p.extend(self.propagator.parameters_mut());
        p
    }

    pub(crate) fn bind(&self, g: &mut Graph, with_stacks: bool) -> ModelVars {
        let stacks = with_stacks.then(|| (self.state_stack.bind(g), self.forcing_stack.bind(g)));
        ModelVars {
            stacks,
            propagator: self.propagator.bind(g),
        }
    }
}

pub(crate) struct ModelVars {
    pub stacks: Option<(StackVars, StackVars)>,
    pub propagator: PropagatorVars,
}

impl ModelVars {
    pub fn params(&self) -> Vec<crate::nn::Var> {
        let mut p = Vec::new();
        if let Some((s, f)) = &self.stacks {
            p.extend(s.params());
            p.extend(f.params());
        }
        p.extend(self.propagator.params());
        p
    }
}
