use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableKind {
    State,
    Forcing,
}

/// One named physical variable, `n_space × n_time`.
#[derive(Clone, Debug, PartialEq)]
pub struct VariableBlock {
    pub name: String,
    pub kind: VariableKind,
    pub values: Matrix,
    pub units: String,
}

impl VariableBlock {
    pub fn new(name: impl Into<String>, kind: VariableKind, values: Matrix, units: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind,
            values,
            units: units.into(),
        }
    }

    pub fn n_space(&self) -> usize {
        self.values.rows()
    }
}

/// Chronological split. Columns `[0, train_end)` are fitted, the train tail
/// `[train_end, val_end)` is validation, and `[val_end, n_time)` is test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Split {
    pub train_end: usize,
    pub val_end: usize,
}

impl Split {
    /// `train_fraction` of the steps form the training period, whose last
    /// `val_fraction` is held out for validation.
    pub fn fractions(n_time: usize, train_fraction: f64, val_fraction: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&train_fraction) || !(0.0..1.0).contains(&val_fraction) {
            return Err(Error::InvalidParam(format!(
                "split fractions {train_fraction}, {val_fraction}"
            )));
        }
        let val_end = ((n_time as f64) * train_fraction).round() as usize;
        let n_val = ((val_end as f64) * val_fraction).round() as usize;
        let s = Self {
            train_end: val_end - n_val,
            val_end,
        };
        s.validate(n_time)?;
        Ok(s)
    }

    /// Default: 80% training period, its final 10% used for validation.
    pub fn default_for(n_time: usize) -> Result<Self> {
        Self::fractions(n_time, 0.8, 0.1)
    }

    pub fn validate(&self, n_time: usize) -> Result<()> {
        if self.train_end == 0 {
            return Err(Error::EmptySplit("training portion is empty".into()));
        }
        if self.train_end > self.val_end || self.val_end > n_time {
            return Err(Error::InvalidParam(format!(
                "split {}..{} does not fit {n_time} steps",
                self.train_end, self.val_end
            )));
        }
        Ok(())
    }

    pub fn train(&self) -> Range<usize> {
        0..self.train_end
    }

    pub fn val(&self) -> Range<usize> {
        self.train_end..self.val_end
    }

    pub fn test(&self, n_time: usize) -> Range<usize> {
        self.val_end..n_time
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub blocks: Vec<VariableBlock>,
    pub dt_seconds: f64,
    /// One positive weight per spatial element of the state blocks.
    pub element_weights: Vec<f64>,
    pub split: Split,
    /// Free-form record of how the data was produced (generator spec, seed).
    pub generator: Option<serde_json::Value>,
}

impl Dataset {
    /// Builds and validates a dataset with uniform weights and the default
    /// split.
    pub fn new(blocks: Vec<VariableBlock>, dt_seconds: f64) -> Result<Self> {
        let n_time = blocks.first().map_or(0, |b| b.values.cols());
        let n_state = blocks
            .iter()
            .find(|b| b.kind == VariableKind::State)
            .map_or(0, |b| b.n_space());
        let d = Self {
            blocks,
            dt_seconds,
            element_weights: vec![1.0 / n_state.max(1) as f64; n_state],
            split: Split::default_for(n_time)?,
            generator: None,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::InvalidParam("dataset has no variable blocks".into()));
        }
        if !(self.dt_seconds > 0.0 && self.dt_seconds.is_finite()) {
            return Err(Error::InvalidParam(format!("dt_seconds {}", self.dt_seconds)));
        }
        let n_time = self.n_time();
        for (i, b) in self.blocks.iter().enumerate() {
            if b.values.cols() != n_time {
                return Err(Error::shape(format!(
                    "block `{}` has {} steps, expected {n_time}",
                    b.name,
                    b.values.cols()
                )));
            }
            if !b.values.all_finite() {
                return Err(Error::NonFinite(format!("block `{}`", b.name)));
            }
            if self.blocks[..i].iter().any(|o| o.name == b.name) {
                return Err(Error::InvalidParam(format!("duplicate block name `{}`", b.name)));
            }
            if b.kind == VariableKind::State && b.n_space() != self.element_weights.len() {
                return Err(Error::shape(format!(
                    "state block `{}` has {} elements but {} weights",
                    b.name,
                    b.n_space(),
                    self.element_weights.len()
                )));
            }
        }
        if self.element_weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidParam("element weights must be positive".into()));
        }
        self.split.validate(n_time)
    }

    pub fn n_time(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.values.cols())
    }

    pub fn block(&self, name: &str) -> Result<&VariableBlock> {
        self.blocks
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| Error::MissingVariable(name.to_string()))
    }

    pub fn blocks_of(&self, kind: VariableKind) -> impl Iterator<Item = &VariableBlock> {
        self.blocks.iter().filter(move |b| b.kind == kind)
    }

    pub fn names_of(&self, kind: VariableKind) -> Vec<String> {
        self.blocks_of(kind).map(|b| b.name.clone()).collect()
    }

    /// All blocks of `kind` stacked vertically in declaration order.
    pub fn stacked(&self, kind: VariableKind) -> Result<Matrix> {
        let parts: Vec<&Matrix> = self.blocks_of(kind).map(|b| &b.values).collect();
        if parts.is_empty() {
            return Ok(Matrix::zeros(0, self.n_time()));
        }
        Matrix::vstack(&parts)
    }

    /// Copy restricted to the time columns in `range`; the split is reset
    /// to cover everything as training data.
    pub fn time_slice(&self, range: Range<usize>) -> Result<Dataset> {
        if range.start >= range.end || range.end > self.n_time() {
            return Err(Error::EmptySplit(format!(
                "time slice {range:?} of {} steps",
                self.n_time()
            )));
        }
        let n = range.len();
        Ok(Dataset {
            blocks: self
                .blocks
                .iter()
                .map(|b| VariableBlock {
                    values: b.values.slice_cols(range.clone()),
                    ..b.clone()
                })
                .collect(),
            dt_seconds: self.dt_seconds,
            element_weights: self.element_weights.clone(),
            split: Split {
                train_end: n,
                val_end: n,
            },
            generator: self.generator.clone(),
        })
    }
}

/// Shifted snapshot matrices over a time window: `X` holds columns
/// `t .. t_end−1`, `X′` columns `t+1 .. t_end`, and likewise for forcings.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshots {
    pub x: Matrix,
    pub x_next: Matrix,
    pub u: Matrix,
    pub u_next: Matrix,
}

/// `(X, X′)` for the stacked blocks of one kind over `range`.
pub fn snapshot_pair(d: &Dataset, kind: VariableKind, range: Range<usize>) -> Result<(Matrix, Matrix)> {
    if range.end > d.n_time() || range.len() < 2 {
        return Err(Error::EmptySplit(format!(
            "need at least 2 steps for snapshot pairs, got {range:?}"
        )));
    }
    let m = d.stacked(kind)?;
    Ok((
        m.slice_cols(range.start..range.end - 1),
        m.slice_cols(range.start + 1..range.end),
    ))
}

/// Aligned `(X, X′, U, U′)` over `range`.
pub fn snapshot_split(d: &Dataset, range: Range<usize>) -> Result<Snapshots> {
    let (x, x_next) = snapshot_pair(d, VariableKind::State, range.clone())?;
    let (u, u_next) = snapshot_pair(d, VariableKind::Forcing, range)?;
    Ok(Snapshots { x, x_next, u, u_next })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, seeded};

    fn toy(n_time: usize, seed: u64) -> Dataset {
        let mut rng = seeded(seed);
        Dataset::new(
            vec![
                VariableBlock::new("s", VariableKind::State, gaussian_matrix(&mut rng, 3, n_time), "m"),
                VariableBlock::new("f", VariableKind::Forcing, gaussian_matrix(&mut rng, 2, n_time), "m/s"),
            ],
            60.0,
        )
        .unwrap()
    }

    #[test]
    fn default_split_layout() {
        let s = Split::default_for(100).unwrap();
        assert_eq!((s.train_end, s.val_end), (72, 80));
        assert!(Split::default_for(0).is_err());
    }

    #[test]
    fn two_steps_give_single_columns() {
        let d = toy(2, 1);
        let mut d = d;
        d.split = Split { train_end: 2, val_end: 2 };
        let s = snapshot_split(&d, 0..2).unwrap();
        assert_eq!(s.x.cols(), 1);
        assert_eq!(s.x_next.cols(), 1);
        assert!(snapshot_split(&d, 0..1).is_err());
    }

    #[test]
    fn shift_identity_and_index_oracle() {
        let d = toy(30, 2);
        let s = snapshot_split(&d, 0..30).unwrap();
        for j in 0..s.x.cols() - 1 {
            assert_eq!(s.x_next.col(j), s.x.col(j + 1));
        }
        let st = &d.block("s").unwrap().values;
        let fo = &d.block("f").unwrap().values;
        for j in 0..29 {
            for i in 0..3 {
                assert_eq!(s.x[(i, j)], st[(i, j)]);
                assert_eq!(s.x_next[(i, j)], st[(i, j + 1)]);
            }
            for i in 0..2 {
                assert_eq!(s.u[(i, j)], fo[(i, j)]);
                assert_eq!(s.u_next[(i, j)], fo[(i, j + 1)]);
            }
        }
    }

    #[test]
    fn validation_catches_bad_inputs() {
        let mut d = toy(10, 3);
        d.element_weights[0] = 0.0;
        assert!(d.validate().is_err());
        let mut d = toy(10, 3);
        d.blocks[1].name = "s".into();
        assert!(d.validate().is_err());
        assert!(matches!(toy(10, 3).block("zz"), Err(Error::MissingVariable(_))));
    }
}
