use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::dataset::Dataset;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockStats {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    /// Set when the training values were constant and `std` was forced to 1.
    pub constant: bool,
}

/// Per-block scalar z-score statistics.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormStats {
    pub blocks: Vec<BlockStats>,
}

impl NormStats {
    /// Statistics that leave every block unchanged.
    pub fn identity(d: &Dataset) -> Self {
        Self {
            blocks: d
                .blocks
                .iter()
                .map(|b| BlockStats {
                    name: b.name.clone(),
                    mean: 0.0,
                    std: 1.0,
                    constant: false,
                })
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<&BlockStats> {
        self.blocks
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| Error::MissingVariable(name.to_string()))
    }

    pub fn apply(&self, name: &str, values: &Matrix) -> Result<Matrix> {
        let s = self.get(name)?;
        Ok(values.map(|x| (x - s.mean) / s.std))
    }

    pub fn invert(&self, name: &str, values: &Matrix) -> Result<Matrix> {
        let s = self.get(name)?;
        Ok(values.map(|x| x * s.std + s.mean))
    }
}

/// z-scores every block with statistics from the fitted training columns
/// only, so nothing from validation or test leaks into the transform.
pub fn normalize(d: &Dataset) -> Result<(Dataset, NormStats)> {
    let train = d.split.train();
    if train.is_empty() {
        return Err(Error::EmptySplit("no training steps to compute statistics".into()));
    }
    let mut stats = NormStats::default();
    for b in &d.blocks {
        let part = b.values.slice_cols(train.clone());
        let n = part.as_slice().len() as f64;
        let mean = part.as_slice().iter().sum::<f64>() / n;
        let var = part.as_slice().iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        let constant = !(std > 1e-12 * mean.abs().max(1.0));
        stats.blocks.push(BlockStats {
            name: b.name.clone(),
            mean,
            std: if constant { 1.0 } else { std },
            constant,
        });
    }
    let out = transform(d, &stats, false)?;
    Ok((out, stats))
}

pub fn denormalize(d: &Dataset, stats: &NormStats) -> Result<Dataset> {
    transform(d, stats, true)
}

fn transform(d: &Dataset, stats: &NormStats, invert: bool) -> Result<Dataset> {
    let mut out = d.clone();
    for b in &mut out.blocks {
        b.values = if invert {
            stats.invert(&b.name, &b.values)?
        } else {
            stats.apply(&b.name, &b.values)?
        };
    }
    Ok(out)
}
