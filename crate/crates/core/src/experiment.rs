//! Experiment configuration and the generate / train / roll out / evaluate
//! pipeline shared by the command-line harness.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::{gen_burgers_forced, gen_linear_forced, load_dataset, BurgersSpec, Dataset, LinearSpec, VariableBlock, VariableKind};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalReport, MetricOptions};
use crate::rollout::{rollout, RolloutOptions, RolloutResult};
use crate::surrogate::Surrogate;
use crate::training::{train, Family, StackSpec, TrainConfig, TrainResult};

/// Parses JSON, rejecting unknown keys and naming the offending field.
pub fn parse_config<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { origin.to_string() } else { path };
        Error::config(path, e.into_inner().to_string())
    })
}

pub fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, &path.display().to_string())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum GeneratorSpec {
    Linear {
        #[serde(default)]
        spec: LinearSpec,
        #[serde(default)]
        seed: u64,
    },
    Burgers {
        #[serde(default)]
        spec: BurgersSpec,
        #[serde(default)]
        seed: u64,
    },
}

impl GeneratorSpec {
    pub fn seed(&self) -> u64 {
        match self {
            GeneratorSpec::Linear { seed, .. } | GeneratorSpec::Burgers { seed, .. } => *seed,
        }
    }

    pub fn set_seed(&mut self, s: u64) {
        match self {
            GeneratorSpec::Linear { seed, .. } | GeneratorSpec::Burgers { seed, .. } => *seed = s,
        }
    }

    /// Runs the generator; invalid specs become config errors on `spec`.
    pub fn generate(&self) -> Result<Dataset> {
        let out = match self {
            GeneratorSpec::Linear { spec, seed } => gen_linear_forced(spec, *seed).map(|r| r.0),
            GeneratorSpec::Burgers { spec, seed } => gen_burgers_forced(spec, *seed),
        };
        out.map_err(|e| match e {
            Error::InvalidParam(m) | Error::Shape(m) => Error::config("generator.spec", m),
            Error::Cfl { factor } => Error::config("generator.spec", format!("CFL factor {factor} exceeds 0.9")),
            other => other,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSource {
    Generate(GeneratorSpec),
    /// Dataset bundle directory, relative to the config file.
    Bundle(PathBuf),
}

impl DatasetSource {
    pub fn load(&self, base_dir: &Path) -> Result<Dataset> {
        match self {
            DatasetSource::Generate(g) => g.generate(),
            DatasetSource::Bundle(p) => load_dataset(&base_dir.join(p)),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutConfig {
    /// Steps after the start of the test period; the whole test period when
    /// absent.
    pub horizon: Option<usize>,
    pub decode_per_step: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub dataset: DatasetSource,
    pub family: Family,
    pub stack: StackSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub rollout: RolloutConfig,
    #[serde(default)]
    pub metrics: MetricOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl RunConfig {
    /// Checks everything that does not need the dataset.
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name.starts_with('.') {
            return Err(Error::config("name", "must be a non-empty plain file name"));
        }
        self.train.validate_for(self.family)?;
        if let DatasetSource::Generate(GeneratorSpec::Linear { spec, .. }) = &self.dataset {
            spec.validate()
                .map_err(|e| Error::config("dataset.generate.spec", e.to_string()))?;
        }
        let (lo, hi) = self.metrics.percentiles;
        if !(0.0..=100.0).contains(&lo) || !(lo..=100.0).contains(&hi) {
            return Err(Error::config("metrics.percentiles", format!("({lo}, {hi}) is not an ordered pair in [0, 100]")));
        }
        if self.rollout.horizon == Some(0) {
            return Err(Error::config("rollout.horizon", "must be positive"));
        }
        Ok(())
    }
}

/// Rollout over the test period `[val_end, n_time)` from its first state,
/// with the matching truth blocks for steps `1..=horizon`.
pub fn test_rollout(
    s: &Surrogate,
    d: &Dataset,
    horizon: Option<usize>,
    opts: RolloutOptions,
) -> Result<(RolloutResult, Vec<VariableBlock>)> {
    let t0 = d.split.val_end;
    let n = d.n_time();
    if t0 + 1 >= n {
        return Err(Error::EmptySplit("test period has fewer than two steps".into()));
    }
    let available = n - 1 - t0;
    let h = horizon.unwrap_or(available);
    if h == 0 || h > available {
        return Err(Error::config(
            "rollout.horizon",
            format!("{h} steps requested, the test period allows 1..={available}"),
        ));
    }
    let slice = |kind: VariableKind, r: std::ops::Range<usize>| -> Vec<VariableBlock> {
        d.blocks_of(kind)
            .map(|b| VariableBlock {
                values: b.values.slice_cols(r.clone()),
                ..b.clone()
            })
            .collect()
    };
    let x0 = slice(VariableKind::State, t0..t0 + 1);
    let forcing = slice(VariableKind::Forcing, t0..t0 + h + 1);
    let truth = slice(VariableKind::State, t0 + 1..t0 + h + 1);
    let result = rollout(s, &x0, &forcing, h, opts)?;
    Ok((result, truth))
}

/// Predictions as a dataset aligned with `truth`, for bundle output.
pub fn prediction_dataset(result: &RolloutResult, truth_source: &Dataset) -> Result<Dataset> {
    let n = result.steps();
    if n == 0 {
        return Err(Error::EmptySplit("rollout produced no steps".into()));
    }
    let d = Dataset {
        blocks: result.states.clone(),
        dt_seconds: truth_source.dt_seconds,
        element_weights: truth_source.element_weights.clone(),
        split: crate::data::Split {
            train_end: n,
            val_end: n,
        },
        generator: None,
    };
    d.validate()?;
    Ok(d)
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub name: String,
    pub dataset: Dataset,
    pub train: TrainResult,
    pub rollout: RolloutResult,
    pub truth: Vec<VariableBlock>,
    pub report: EvalReport,
    pub train_seconds: f64,
    pub inference_seconds: f64,
}

pub fn run_experiment(cfg: &RunConfig, base_dir: &Path) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let dataset = cfg.dataset.load(base_dir)?;
    cfg.stack.validate(&dataset)?;
    let started = Instant::now();
    let trained = train(cfg.family, &dataset, &cfg.stack, &cfg.train)?;
    let train_seconds = started.elapsed().as_secs_f64();
    let opts = RolloutOptions {
        decode_per_step: cfg.rollout.decode_per_step,
        keep_latent: false,
    };
    let (result, truth) = test_rollout(&trained.surrogate, &dataset, cfg.rollout.horizon, opts)?;
    let n = result.steps();
    let truth_cut: Vec<VariableBlock> = truth
        .iter()
        .map(|b| VariableBlock {
            values: b.values.slice_cols(0..n),
            ..b.clone()
        })
        .collect();
    let report = evaluate(&truth_cut, &result.states, &dataset.element_weights, &cfg.metrics)?;
    Ok(ExperimentOutcome {
        name: cfg.name.clone(),
        inference_seconds: result.duration.as_secs_f64(),
        dataset,
        train: trained,
        rollout: result,
        truth: truth_cut,
        report,
        train_seconds,
    })
}

/// One row of a family comparison. Failed members keep their name and the
/// error message.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub name: String,
    pub family: Family,
    pub rel_rmse: Option<f64>,
    pub spread: Option<(f64, f64)>,
    pub val_physical_mse: Option<f64>,
    pub epochs: Option<usize>,
    pub diverged_at: Option<usize>,
    pub train_seconds: Option<f64>,
    pub inference_seconds: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<CompareRow>,
}

/// Members must be at least two with distinct names.
pub fn check_compare(configs: &[RunConfig]) -> Result<()> {
    if configs.len() < 2 {
        return Err(Error::config("runs", "a comparison needs at least two runs"));
    }
    for (i, c) in configs.iter().enumerate() {
        if configs[..i].iter().any(|o| o.name == c.name) {
            return Err(Error::DuplicateName(c.name.clone()));
        }
    }
    Ok(())
}

impl CompareRow {
    pub fn from_outcome(cfg: &RunConfig, outcome: &Result<ExperimentOutcome>) -> Self {
        let mut row = CompareRow {
            name: cfg.name.clone(),
            family: cfg.family,
            rel_rmse: None,
            spread: None,
            val_physical_mse: None,
            epochs: None,
            diverged_at: None,
            train_seconds: None,
            inference_seconds: None,
            error: None,
        };
        match outcome {
            Ok(o) => {
                let vars = &o.report.variables;
                let k = vars.len().max(1) as f64;
                row.rel_rmse = Some(vars.iter().map(|v| v.rel_rmse).sum::<f64>() / k);
                row.spread = Some(vars.iter().fold((0.0, 0.0), |acc, v| {
                    (f64::max(acc.0, v.spread.0), f64::max(acc.1, v.spread.1))
                }));
                row.val_physical_mse = Some(o.train.val_physical_mse);
                row.epochs = Some(o.train.epochs);
                row.diverged_at = o.rollout.divergence.map(|f| f.step);
                row.train_seconds = Some(o.train_seconds);
                row.inference_seconds = Some(o.inference_seconds);
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        row
    }
}

impl Comparison {
    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4e}"));
        let header = ["name", "family", "rel_rmse", "spread_lo", "spread_hi", "val_mse", "epochs", "train_s", "infer_s", "status"];
        let mut cells: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
        for r in &self.rows {
            let status = match (&r.error, r.diverged_at) {
                (Some(e), _) => format!("FAILED: {e}"),
                (None, Some(k)) => format!("diverged at {k}"),
                (None, None) => "ok".into(),
            };
            cells.push(vec![
                r.name.clone(),
                r.family.to_string(),
                fmt(r.rel_rmse),
                fmt(r.spread.map(|s| s.0)),
                fmt(r.spread.map(|s| s.1)),
                fmt(r.val_physical_mse),
                r.epochs.map_or("-".into(), |e| e.to_string()),
                r.train_seconds.map_or("-".into(), |s| format!("{s:.2}")),
                r.inference_seconds.map_or("-".into(), |s| format!("{s:.3}")),
                status,
            ]);
        }
        let widths: Vec<usize> = (0..header.len())
            .map(|c| cells.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &cells {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (s, w))| if c + 1 == row.len() { s.clone() } else { format!("{s:<w$}") })
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

/// A list of experiments to compare.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub runs: Vec<RunConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxis {
    /// Dotted path into the run config, e.g. `train.optimizer.lr`.
    pub path: String,
    pub values: Vec<serde_json::Value>,
}

/// Deterministic sweep: the cartesian product of `axes` applied to `base`,
/// first axis varying slowest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub base: RunConfig,
    pub axes: Vec<GridAxis>,
}

fn set_path(root: &mut serde_json::Value, path: &str, value: serde_json::Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, key) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            serde_json::Value::Object(map) => {
                if last {
                    map.insert(key.to_string(), value);
                    return Ok(());
                }
                map.entry(key.to_string())
                    .or_insert_with(|| serde_json::Value::Object(Default::default()))
            }
            serde_json::Value::Array(items) => {
                let idx: usize = key
                    .parse()
                    .map_err(|_| Error::config(format!("axes.{path}"), format!("`{key}` is not an index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| Error::config(format!("axes.{path}"), format!("index {idx} out of {len}")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::config(format!("axes.{path}"), format!("`{key}` is inside a scalar"))),
        };
    }
    Ok(())
}

impl GridConfig {
    pub fn expand(&self) -> Result<Vec<RunConfig>> {
        if self.axes.iter().any(|a| a.values.is_empty()) {
            return Err(Error::config("axes", "every axis needs at least one value"));
        }
        let base = serde_json::to_value(&self.base)?;
        let total: usize = self.axes.iter().map(|a| a.values.len()).product();
        let mut out = Vec::with_capacity(total);
        for idx in 0..total {
            let mut v = base.clone();
            let mut rem = idx;
            let mut picks = vec![0; self.axes.len()];
            for (ai, a) in self.axes.iter().enumerate().rev() {
                picks[ai] = rem % a.values.len();
                rem /= a.values.len();
            }
            for (a, &p) in self.axes.iter().zip(&picks) {
                set_path(&mut v, &a.path, a.values[p].clone())?;
            }
            set_path(&mut v, "name", serde_json::Value::String(format!("{}-{idx:03}", self.base.name)))?;
            let cfg: RunConfig = parse_config(&v.to_string(), &format!("grid point {idx}"))?;
            cfg.validate()
                .map_err(|e| Error::config(format!("grid point {idx}"), e.to_string()))?;
            out.push(cfg);
        }
        Ok(out)
    }
}
