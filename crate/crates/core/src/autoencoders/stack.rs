use std::ops::Range;

use crate::data::VariableBlock;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{Graph, MlpVars, Var};

use super::neural::NeuralCoder;
use super::pod::PodBasis;

#[derive(Clone, Debug, PartialEq)]
pub enum Coder {
    Pod(PodBasis),
    Neural(NeuralCoder),
}

impl Coder {
    pub fn latent_dim(&self) -> usize {
        match self {
            Coder::Pod(p) => p.latent_dim(),
            Coder::Neural(n) => n.latent_dim,
        }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            Coder::Pod(p) => p.n_space(),
            Coder::Neural(n) => n.in_dim(),
        }
    }

    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            Coder::Pod(p) => p.encode(x),
            Coder::Neural(n) => n.encode(x),
        }
    }

    pub fn decode(&self, z: &Matrix) -> Result<Matrix> {
        match self {
            Coder::Pod(p) => p.decode(z),
            Coder::Neural(n) => n.decode(z),
        }
    }
}

/// Variables sharing one coder. Each variable is listed with its spatial
/// size; the group input is the variables stacked in this order.
#[derive(Clone, Debug, PartialEq)]
pub struct CoderGroup {
    pub variables: Vec<(String, usize)>,
    pub coder: Coder,
}

impl CoderGroup {
    pub fn input_dim(&self) -> usize {
        self.variables.iter().map(|v| v.1).sum()
    }
}

/// Variable-separated encoder/decoder. Group latents are concatenated in
/// declaration order.
#[derive(Clone, Debug, PartialEq)]
pub struct AutoencoderStack {
    pub groups: Vec<CoderGroup>,
}

impl AutoencoderStack {
    pub fn new(groups: Vec<CoderGroup>) -> Result<Self> {
        let mut seen: Vec<&str> = Vec::new();
        for g in &groups {
            if g.input_dim() != g.coder.in_dim() {
                return Err(Error::shape(format!(
                    "group {:?} stacks {} values but its coder expects {}",
                    g.variables.iter().map(|v| &v.0).collect::<Vec<_>>(),
                    g.input_dim(),
                    g.coder.in_dim()
                )));
            }
            for (name, _) in &g.variables {
                if seen.contains(&name.as_str()) {
                    return Err(Error::InvalidParam(format!("variable `{name}` is in two groups")));
                }
                seen.push(name);
            }
        }
        Ok(Self { groups })
    }

    pub fn latent_dim(&self) -> usize {
        self.groups.iter().map(|g| g.coder.latent_dim()).sum()
    }

    pub fn input_dim(&self) -> usize {
        self.groups.iter().map(|g| g.input_dim()).sum()
    }

    pub fn variable_names(&self) -> Vec<&str> {
        self.groups
            .iter()
            .flat_map(|g| g.variables.iter().map(|v| v.0.as_str()))
            .collect()
    }

    /// Fails unless `names` are exactly the variables of this stack.
    pub fn check_covers(&self, names: &[String]) -> Result<()> {
        let mine = self.variable_names();
        for n in names {
            if !mine.contains(&n.as_str()) {
                return Err(Error::InvalidParam(format!("variable `{n}` belongs to no group")));
            }
        }
        for m in mine {
            if !names.iter().any(|n| n == m) {
                return Err(Error::MissingVariable(m.to_string()));
            }
        }
        Ok(())
    }

    pub fn latent_ranges(&self) -> Vec<Range<usize>> {
        ranges(self.groups.iter().map(|g| g.coder.latent_dim()))
    }

    pub fn input_ranges(&self) -> Vec<Range<usize>> {
        ranges(self.groups.iter().map(|g| g.input_dim()))
    }

    /// Stacks the stack's variables from `blocks` in group order.
    pub fn gather(&self, blocks: &[VariableBlock]) -> Result<Matrix> {
        let mut parts = Vec::new();
        for g in &self.groups {
            for (name, size) in &g.variables {
                let b = blocks
                    .iter()
                    .find(|b| &b.name == name)
                    .ok_or_else(|| Error::MissingVariable(name.clone()))?;
                if b.n_space() != *size {
                    return Err(Error::shape(format!(
                        "variable `{name}` has {} elements, stack expects {size}",
                        b.n_space()
                    )));
                }
                parts.push(&b.values);
            }
        }
        Matrix::vstack(&parts)
    }

    /// Splits a stacked matrix back into named variables.
    pub fn scatter(&self, stacked: &Matrix) -> Result<Vec<(String, Matrix)>> {
        if stacked.rows() != self.input_dim() {
            return Err(Error::shape(format!(
                "scatter expects {} rows, got {}",
                self.input_dim(),
                stacked.rows()
            )));
        }
        let mut out = Vec::new();
        let mut row = 0;
        for g in &self.groups {
            for (name, size) in &g.variables {
                out.push((name.clone(), stacked.slice_rows(row..row + size)));
                row += size;
            }
        }
        Ok(out)
    }

    pub fn encode(&self, blocks: &[VariableBlock]) -> Result<Matrix> {
        self.encode_stacked(&self.gather(blocks)?)
    }

    /// `x [input_dim × n]` → latent `[Ñ × n]`.
    pub fn encode_stacked(&self, x: &Matrix) -> Result<Matrix> {
        if x.rows() != self.input_dim() {
            return Err(Error::shape(format!(
                "encode expects {} rows, got {}",
                self.input_dim(),
                x.rows()
            )));
        }
        let parts = self
            .groups
            .iter()
            .zip(self.input_ranges())
            .map(|(g, r)| g.coder.encode(&x.slice_rows(r)))
            .collect::<Result<Vec<_>>>()?;
        Matrix::vstack(&parts.iter().collect::<Vec<_>>())
    }

    pub fn decode(&self, z: &Matrix) -> Result<Vec<(String, Matrix)>> {
        self.scatter(&self.decode_stacked(z)?)
    }

    pub fn decode_stacked(&self, z: &Matrix) -> Result<Matrix> {
        if z.rows() != self.latent_dim() {
            return Err(Error::shape(format!(
                "decode expects {} latent rows, got {}",
                self.latent_dim(),
                z.rows()
            )));
        }
        let parts = self
            .groups
            .iter()
            .zip(self.latent_ranges())
            .map(|(g, r)| g.coder.decode(&z.slice_rows(r)))
            .collect::<Result<Vec<_>>>()?;
        Matrix::vstack(&parts.iter().collect::<Vec<_>>())
    }

    /// Trainable tensors of the neural groups, in group order.
    pub fn parameters(&self) -> Vec<&Matrix> {
        self.groups
            .iter()
            .flat_map(|g| match &g.coder {
                Coder::Neural(n) => n.parameters(),
                Coder::Pod(_) => Vec::new(),
            })
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        self.groups
            .iter_mut()
            .flat_map(|g| match &mut g.coder {
                Coder::Neural(n) => n.parameters_mut(),
                Coder::Pod(_) => Vec::new(),
            })
            .collect()
    }

    /// Places the stack on a graph; POD groups become constants.
    pub fn bind(&self, g: &mut Graph) -> StackVars {
        let groups = self
            .groups
            .iter()
            .map(|grp| match &grp.coder {
                Coder::Pod(p) => GroupVars::Pod {
                    modes: g.constant(p.modes.clone()),
                    neg_mean: g.constant(Matrix::row_vector(&p.mean).scale(-1.0)),
                    mean: g.constant(Matrix::row_vector(&p.mean)),
                },
                Coder::Neural(n) => GroupVars::Neural {
                    enc: n.encoder.bind(g),
                    dec: n.decoder.as_ref().map(|d| d.bind(g)),
                },
            })
            .collect();
        StackVars {
            groups,
            input_ranges: self.input_ranges(),
            latent_ranges: self.latent_ranges(),
        }
    }
}

fn ranges(sizes: impl Iterator<Item = usize>) -> Vec<Range<usize>> {
    let mut start = 0;
    sizes
        .map(|s| {
            let r = start..start + s;
            start += s;
            r
        })
        .collect()
}

#[derive(Clone, Debug)]
enum GroupVars {
    Pod { modes: Var, neg_mean: Var, mean: Var },
    Neural { enc: MlpVars, dec: Option<MlpVars> },
}

/// An [`AutoencoderStack`] bound to a graph. Inputs and latents are laid out
/// as rows (`batch × features`).
#[derive(Clone, Debug)]
pub struct StackVars {
    groups: Vec<GroupVars>,
    input_ranges: Vec<Range<usize>>,
    latent_ranges: Vec<Range<usize>>,
}

impl StackVars {
    pub fn encode(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let mut parts = Vec::with_capacity(self.groups.len());
        for (grp, r) in self.groups.iter().zip(&self.input_ranges) {
            let xi = if self.groups.len() == 1 {
                x
            } else {
                g.slice_cols(x, r.start, r.end)?
            };
            let zi = match grp {
                GroupVars::Pod { modes, neg_mean, .. } => {
                    let centered = g.add_row(xi, *neg_mean)?;
                    g.matmul(centered, *modes)?
                }
                GroupVars::Neural { enc, .. } => enc.forward(g, xi)?,
            };
            parts.push(zi);
        }
        g.hcat(&parts)
    }

    pub fn decode(&self, g: &mut Graph, z: Var) -> Result<Var> {
        let mut parts = Vec::with_capacity(self.groups.len());
        for (grp, r) in self.groups.iter().zip(&self.latent_ranges) {
            let zi = if self.groups.len() == 1 {
                z
            } else {
                g.slice_cols(z, r.start, r.end)?
            };
            let xi = match grp {
                GroupVars::Pod { modes, mean, .. } => {
                    let lin = g.matmul_t(zi, *modes)?;
                    g.add_row(lin, *mean)?
                }
                GroupVars::Neural { dec: Some(dec), .. } => dec.forward(g, zi)?,
                GroupVars::Neural { dec: None, .. } => {
                    return Err(Error::InvalidParam("coder has no decoder".into()))
                }
            };
            parts.push(xi);
        }
        g.hcat(&parts)
    }

    /// Same order as [`AutoencoderStack::parameters`].
    pub fn params(&self) -> Vec<Var> {
        self.groups
            .iter()
            .flat_map(|grp| match grp {
                GroupVars::Pod { .. } => Vec::new(),
                GroupVars::Neural { enc, dec } => {
                    let mut p = enc.params();
                    if let Some(d) = dec {
                        p.extend(d.params());
                    }
                    p
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoders::pod_fit;
    use crate::data::VariableKind;
    use crate::rng::{gaussian_matrix, seeded};

    fn blocks() -> Vec<VariableBlock> {
        let mut rng = seeded(1);
        vec![
            VariableBlock::new("S", VariableKind::State, gaussian_matrix(&mut rng, 6, 30), "m"),
            VariableBlock::new("U", VariableKind::State, gaussian_matrix(&mut rng, 4, 30), "m/s"),
            VariableBlock::new("V", VariableKind::State, gaussian_matrix(&mut rng, 4, 30), "m/s"),
        ]
    }

    fn two_group_stack(b: &[VariableBlock]) -> AutoencoderStack {
        let s = pod_fit(&b[0].values, 3, 0).unwrap();
        let uv = Matrix::vstack(&[&b[1].values, &b[2].values]).unwrap();
        let p = pod_fit(&uv, 4, 0).unwrap();
        AutoencoderStack::new(vec![
            CoderGroup {
                variables: vec![("S".into(), 6)],
                coder: Coder::Pod(s),
            },
            CoderGroup {
                variables: vec![("U".into(), 4), ("V".into(), 4)],
                coder: Coder::Pod(p),
            },
        ])
        .unwrap()
    }

    #[test]
    fn concatenation_matches_independent_groups() {
        let b = blocks();
        let st = two_group_stack(&b);
        let z = st.encode(&b).unwrap();
        assert_eq!(z.rows(), 7);
        let z0 = st.groups[0].coder.encode(&b[0].values).unwrap();
        let uv = Matrix::vstack(&[&b[1].values, &b[2].values]).unwrap();
        let z1 = st.groups[1].coder.encode(&uv).unwrap();
        assert_eq!(z.slice_rows(0..3), z0);
        assert_eq!(z.slice_rows(3..7), z1);
    }

    #[test]
    fn groups_are_independent_of_other_groups_data() {
        let b = blocks();
        let st = two_group_stack(&b);
        let mut perturbed = b.clone();
        perturbed[1].values = perturbed[1].values.scale(10.0);
        let z = st.encode(&b).unwrap();
        let zp = st.encode(&perturbed).unwrap();
        assert_eq!(z.slice_rows(0..3), zp.slice_rows(0..3));
        let d = st.decode(&z).unwrap();
        let dp = st.decode(&zp).unwrap();
        assert_eq!(d[0], dp[0]);
    }

    #[test]
    fn missing_variable_and_overlap() {
        let b = blocks();
        let st = two_group_stack(&b);
        assert!(matches!(st.encode(&b[..2]), Err(Error::MissingVariable(v)) if v == "V"));
        let dup = vec![st.groups[0].clone(), st.groups[0].clone()];
        assert!(AutoencoderStack::new(dup).is_err());
        assert!(st.check_covers(&["S".into(), "U".into()]).is_err());
        assert!(st.check_covers(&["S".into(), "U".into(), "V".into()]).is_ok());
    }

    #[test]
    fn bound_stack_matches_direct_encode_decode() {
        let b = blocks();
        let st = two_group_stack(&b);
        let x = st.gather(&b).unwrap();
        let mut g = Graph::new();
        let vars = st.bind(&mut g);
        let xv = g.constant(x.transpose());
        let z = vars.encode(&mut g, xv).unwrap();
        let direct = st.encode_stacked(&x).unwrap();
        assert!(g.value(z).transpose().sub(&direct).unwrap().max_abs() < 1e-12);
        let y = vars.decode(&mut g, z).unwrap();
        let direct_y = st.decode_stacked(&direct).unwrap();
        assert!(g.value(y).transpose().sub(&direct_y).unwrap().max_abs() < 1e-12);
    }
}
