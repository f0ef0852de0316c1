//! Frozen surrogates and their on-disk bundles: `surrogate.json` plus one raw
//! little-endian f64 file per parameter tensor.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autoencoders::{AutoencoderStack, Coder, CoderGroup, NeuralCoder, PodBasis};
use crate::data::{NormStats, VariableBlock};
use crate::error::{Error, Result};
use crate::io::{read_json, read_matrix, write_dir_atomic, write_json, write_matrix};
use crate::linalg::Matrix;
use crate::nn::{Activation, AffineLayer, Mlp};
use crate::propagators::{KoopmanOperator, LatentSpec, LinearPropagator, MlpPropagator, Propagator};
use crate::training::{Family, LatentModel};

pub const SURROGATE_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub family: Family,
    /// SHA-256 of the canonical JSON of `config`.
    pub config_hash: String,
    pub seed: u64,
    /// SHA-256 of the JSON-lines training log.
    pub log_digest: String,
    /// Fully materialized training configuration.
    pub config: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Surrogate {
    pub family: Family,
    pub norm: NormStats,
    pub model: LatentModel,
    pub provenance: Provenance,
}

impl Surrogate {
    pub fn latent(&self) -> LatentSpec {
        self.model.latent()
    }

    pub fn state_variables(&self) -> Vec<&str> {
        self.model.state_stack.variable_names()
    }

    pub fn forcing_variables(&self) -> Vec<&str> {
        self.model.forcing_stack.variable_names()
    }

    fn normalized(&self, blocks: &[VariableBlock]) -> Result<Vec<VariableBlock>> {
        blocks
            .iter()
            .map(|b| {
                Ok(VariableBlock::new(
                    b.name.clone(),
                    b.kind,
                    self.norm.apply(&b.name, &b.values)?,
                    b.units.clone(),
                ))
            })
            .collect()
    }

    /// Physical state blocks → latent columns `[Ñx × n]`.
    pub fn encode_state(&self, blocks: &[VariableBlock]) -> Result<Matrix> {
        self.model.state_stack.encode(&self.normalized(blocks)?)
    }

    /// Physical forcing blocks → latent columns `[Ñu × n]`.
    pub fn encode_forcing(&self, blocks: &[VariableBlock]) -> Result<Matrix> {
        self.model.forcing_stack.encode(&self.normalized(blocks)?)
    }

    /// Latent columns → named physical state matrices.
    pub fn decode_state(&self, z: &Matrix) -> Result<Vec<(String, Matrix)>> {
        self.model
            .state_stack
            .decode(z)?
            .into_iter()
            .map(|(name, m)| {
                let phys = self.norm.invert(&name, &m)?;
                Ok((name, phys))
            })
            .collect()
    }

    pub fn save(&self, dir: &Path, force: bool) -> Result<()> {
        self.save_with_extras(dir, force, &[])
    }

    /// Saves the bundle plus extra named files written in the same atomic
    /// step.
    pub fn save_with_extras(&self, dir: &Path, force: bool, extras: &[(&str, Vec<u8>)]) -> Result<()> {
        let mut w = TensorWriter::default();
        let manifest = SurrogateManifest {
            format_version: SURROGATE_FORMAT_VERSION,
            family: self.family,
            latent: self.latent(),
            state_stack: stack_layout(&self.model.state_stack, "state", &mut w),
            forcing_stack: stack_layout(&self.model.forcing_stack, "forcing", &mut w),
            propagator: propagator_layout(&self.model.propagator, &mut w),
            norm: self.norm.clone(),
            provenance: self.provenance.clone(),
        };
        write_dir_atomic(dir, force, |tmp| {
            for (file, m) in &w.tensors {
                write_matrix(&tmp.join(file), m)?;
            }
            for (name, bytes) in extras {
                let path = tmp.join(name);
                std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            }
            write_json(&tmp.join("surrogate.json"), &manifest)
        })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let m: SurrogateManifest = read_json(&dir.join("surrogate.json"))?;
        if m.format_version != SURROGATE_FORMAT_VERSION {
            return Err(Error::config(
                "surrogate.format_version",
                format!("unsupported version {}", m.format_version),
            ));
        }
        let r = TensorReader { dir };
        let model = LatentModel::new(
            load_stack(&m.state_stack, &r)?,
            load_stack(&m.forcing_stack, &r)?,
            load_propagator(&m.propagator, m.latent, &r)?,
        )
        .map_err(|e| Error::config(dir.join("surrogate.json").display().to_string(), e.to_string()))?;
        Ok(Self {
            family: m.family,
            norm: m.norm,
            model,
            provenance: m.provenance,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateManifest {
    pub format_version: u32,
    pub family: Family,
    pub latent: LatentSpec,
    pub state_stack: Vec<GroupLayout>,
    pub forcing_stack: Vec<GroupLayout>,
    pub propagator: PropagatorLayout,
    pub norm: NormStats,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRef {
    pub file: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupLayout {
    pub variables: Vec<(String, usize)>,
    pub coder: CoderLayout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CoderLayout {
    Pod {
        modes: TensorRef,
        mean: TensorRef,
        energy: Vec<f64>,
        singular_values: Vec<f64>,
        centered: bool,
    },
    Neural {
        encoder: MlpLayout,
        decoder: Option<MlpLayout>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpLayout {
    pub activation: Activation,
    pub layers: Vec<LayerLayout>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerLayout {
    pub weight: TensorRef,
    pub bias: TensorRef,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PropagatorLayout {
    Linear { a: TensorRef },
    Koopman { c_f: TensorRef },
    Mlp { net: MlpLayout },
}

#[derive(Default)]
struct TensorWriter {
    tensors: Vec<(String, Matrix)>,
}

impl TensorWriter {
    fn put(&mut self, name: String, m: &Matrix) -> TensorRef {
        let file = format!("{name}.bin");
        self.tensors.push((file.clone(), m.clone()));
        TensorRef {
            file,
            rows: m.rows(),
            cols: m.cols(),
        }
    }
}

struct TensorReader<'a> {
    dir: &'a Path,
}

impl TensorReader<'_> {
    fn get(&self, t: &TensorRef) -> Result<Matrix> {
        let safe = !t.file.contains(['/', '\\']) && !t.file.starts_with('.');
        if !safe {
            return Err(Error::config("surrogate.json", format!("tensor file `{}` is not a plain name", t.file)));
        }
        read_matrix(&self.dir.join(&t.file), t.rows, t.cols)
    }
}

fn mlp_layout(net: &Mlp, prefix: &str, w: &mut TensorWriter) -> MlpLayout {
    MlpLayout {
        activation: net.activation,
        layers: net
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| LayerLayout {
                weight: w.put(format!("{prefix}.{i}.weight"), &l.weight),
                bias: w.put(format!("{prefix}.{i}.bias"), &l.bias),
            })
            .collect(),
    }
}

fn stack_layout(stack: &AutoencoderStack, prefix: &str, w: &mut TensorWriter) -> Vec<GroupLayout> {
    stack
        .groups
        .iter()
        .enumerate()
        .map(|(gi, g)| GroupLayout {
            variables: g.variables.clone(),
            coder: match &g.coder {
                Coder::Pod(p) => CoderLayout::Pod {
                    modes: w.put(format!("{prefix}.{gi}.modes"), &p.modes),
                    mean: w.put(format!("{prefix}.{gi}.mean"), &Matrix::row_vector(&p.mean)),
                    energy: p.energy.clone(),
                    singular_values: p.singular_values.clone(),
                    centered: p.centered,
                },
                Coder::Neural(n) => CoderLayout::Neural {
                    encoder: mlp_layout(&n.encoder, &format!("{prefix}.{gi}.encoder"), w),
                    decoder: n
                        .decoder
                        .as_ref()
                        .map(|d| mlp_layout(d, &format!("{prefix}.{gi}.decoder"), w)),
                },
            },
        })
        .collect()
}

fn propagator_layout(p: &Propagator, w: &mut TensorWriter) -> PropagatorLayout {
    match p {
        Propagator::Linear(l) => PropagatorLayout::Linear {
            a: w.put("propagator.a".into(), &l.a),
        },
        Propagator::Koopman(k) => PropagatorLayout::Koopman {
            c_f: w.put("propagator.c_f".into(), &k.c_f),
        },
        Propagator::Mlp(m) => PropagatorLayout::Mlp {
            net: mlp_layout(&m.net, "propagator.net", w),
        },
    }
}

fn load_mlp(l: &MlpLayout, r: &TensorReader) -> Result<Mlp> {
    let layers = l
        .layers
        .iter()
        .map(|x| AffineLayer::new(r.get(&x.weight)?, r.get(&x.bias)?))
        .collect::<Result<Vec<_>>>()?;
    Mlp::new(layers, l.activation)
}

fn load_stack(groups: &[GroupLayout], r: &TensorReader) -> Result<AutoencoderStack> {
    let mut out = Vec::with_capacity(groups.len());
    for g in groups {
        let coder = match &g.coder {
            CoderLayout::Pod {
                modes,
                mean,
                energy,
                singular_values,
                centered,
            } => Coder::Pod(PodBasis {
                modes: r.get(modes)?,
                mean: r.get(mean)?.into_vec(),
                energy: energy.clone(),
                singular_values: singular_values.clone(),
                centered: *centered,
            }),
            CoderLayout::Neural { encoder, decoder } => Coder::Neural(NeuralCoder::new(
                load_mlp(encoder, r)?,
                decoder.as_ref().map(|d| load_mlp(d, r)).transpose()?,
            )?),
        };
        out.push(CoderGroup {
            variables: g.variables.clone(),
            coder,
        });
    }
    AutoencoderStack::new(out)
}

fn load_propagator(p: &PropagatorLayout, latent: LatentSpec, r: &TensorReader) -> Result<Propagator> {
    Ok(match p {
        PropagatorLayout::Linear { a } => Propagator::Linear(LinearPropagator::new(r.get(a)?, latent)?),
        PropagatorLayout::Koopman { c_f } => Propagator::Koopman(KoopmanOperator::new(r.get(c_f)?, latent)?),
        PropagatorLayout::Mlp { net } => Propagator::Mlp(MlpPropagator::new(load_mlp(net, r)?, latent)?),
    })
}
