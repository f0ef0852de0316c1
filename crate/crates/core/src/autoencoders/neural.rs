use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{Activation, Mlp};
use crate::rng::RomRng;

/// Learned encoder with an optional decoder. Forcing coders only encode.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuralCoder {
    pub encoder: Mlp,
    pub decoder: Option<Mlp>,
    pub latent_dim: usize,
}

impl NeuralCoder {
    pub fn new(encoder: Mlp, decoder: Option<Mlp>) -> Result<Self> {
        let latent_dim = encoder.out_dim();
        if let Some(dec) = &decoder {
            if dec.in_dim() != latent_dim || dec.out_dim() != encoder.in_dim() {
                return Err(Error::shape(format!(
                    "decoder {}->{} does not invert encoder {}->{}",
                    dec.in_dim(),
                    dec.out_dim(),
                    encoder.in_dim(),
                    latent_dim
                )));
            }
        }
        Ok(Self {
            encoder,
            decoder,
            latent_dim,
        })
    }

    /// Single affine layer each way, no activation.
    pub fn linear(in_dim: usize, latent: usize, with_decoder: bool, rng: &mut RomRng) -> Result<Self> {
        let enc = Mlp::init(&[in_dim, latent], Activation::Identity, rng)?;
        let dec = if with_decoder {
            Some(Mlp::init(&[latent, in_dim], Activation::Identity, rng)?)
        } else {
            None
        };
        Self::new(enc, dec)
    }

    /// ReLU MLP encoder through `hidden`, mirrored for the decoder.
    pub fn mlp(
        in_dim: usize,
        hidden: &[usize],
        latent: usize,
        with_decoder: bool,
        rng: &mut RomRng,
    ) -> Result<Self> {
        let mut dims = vec![in_dim];
        dims.extend_from_slice(hidden);
        dims.push(latent);
        let enc = Mlp::init(&dims, Activation::Relu, rng)?;
        let dec = if with_decoder {
            dims.reverse();
            Some(Mlp::init(&dims, Activation::Relu, rng)?)
        } else {
            None
        };
        Self::new(enc, dec)
    }

    pub fn in_dim(&self) -> usize {
        self.encoder.in_dim()
    }

    /// Columns in, columns out.
    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.encoder.forward(&x.transpose())?.transpose())
    }

    pub fn decode(&self, z: &Matrix) -> Result<Matrix> {
        let dec = self
            .decoder
            .as_ref()
            .ok_or_else(|| Error::InvalidParam("coder has no decoder".into()))?;
        Ok(dec.forward(&z.transpose())?.transpose())
    }

    pub fn parameters(&self) -> Vec<&Matrix> {
        let mut p = self.encoder.parameters();
        if let Some(d) = &self.decoder {
            p.extend(d.parameters());
        }
        p
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        let mut p = self.encoder.parameters_mut();
        if let Some(d) = &mut self.decoder {
            p.extend(d.parameters_mut());
        }
        p
    }
}
