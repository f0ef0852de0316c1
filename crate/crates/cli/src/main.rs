use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use forced_rom::data::{load_dataset, load_manifest, save_dataset, Dataset, VariableBlock, VariableKind};
use forced_rom::experiment::{
    check_compare, prediction_dataset, read_config, run_experiment, test_rollout, CompareConfig, CompareRow,
    Comparison, ExperimentOutcome, GeneratorSpec, GridConfig, RunConfig,
};
use forced_rom::io::{write_atomic, write_dir_atomic, write_json};
use forced_rom::metrics::{evaluate, EvalReport, MetricOptions};
use forced_rom::rollout::{bench_inference, rollout, RolloutOptions};
use forced_rom::surrogate::Surrogate;
use forced_rom::training::{log_to_jsonl, train, Family, StackSpec};
use forced_rom::Error;

#[derive(Parser)]
#[command(name = "forced-rom", version, about = "Reduced-order surrogates for forced dynamical systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace existing outputs.
    #[arg(long)]
    force: bool,
    /// Worker threads for `compare` and `grid`.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset bundle from a generator spec.
    Generate(Common),
    /// Train a surrogate from a run config.
    Train(Common),
    /// Roll a trained surrogate forward over a dataset.
    Rollout {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        surrogate: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Steps to predict; the rest of the dataset by default.
        #[arg(long)]
        horizon: Option<usize>,
        /// Index of the initial state; the start of the test period by default.
        #[arg(long)]
        start: Option<usize>,
        #[arg(long)]
        decode_per_step: bool,
    },
    /// Score a prediction bundle against a truth bundle.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Prediction bundle of a reference model for skill retention.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Percentile pair, e.g. `2,98` or `5,95`.
        #[arg(long, value_delimiter = ',')]
        percentiles: Option<Vec<f64>>,
        /// Also write per-element RMSE as CSV.
        #[arg(long)]
        csv: bool,
    },
    /// Run several experiments and tabulate them.
    Compare(Common),
    /// Expand a parameter grid and run it as a comparison.
    Grid(Common),
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Diverged(String),
    Mismatch(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Diverged(_) => 3,
            Failure::Mismatch(_) => 4,
            Failure::Other(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Diverged(m) | Failure::Mismatch(m) | Failure::Other(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::TrainingDiverged { .. } => Failure::Diverged(e.to_string()),
            Error::Config { .. } | Error::DuplicateName(_) | Error::Json(_) | Error::InvalidParam(_) => {
                Failure::Config(e.to_string())
            }
            _ => Failure::Other(e.to_string()),
        }
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn config_path(c: &Common) -> std::result::Result<&Path, Failure> {
    c.config
        .as_deref()
        .ok_or_else(|| Failure::Config("--config is required".into()))
}

fn base_dir(config: &Path) -> PathBuf {
    config
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn out_dir(c: &Common, fallback: Option<&PathBuf>) -> std::result::Result<PathBuf, Failure> {
    c.out
        .clone()
        .or_else(|| fallback.cloned())
        .ok_or_else(|| Failure::Config("--out is required".into()))
}

fn cmd_generate(c: &Common) -> CmdResult {
    let path = config_path(c)?;
    let mut spec: GeneratorSpec = read_config(path)?;
    if let Some(s) = c.seed {
        spec.set_seed(s);
    }
    let out = out_dir(c, None)?;
    let d = spec.generate()?;
    save_dataset(&d, &out, c.force, None, None)?;
    log::info!("wrote {} steps to {}", d.n_time(), out.display());
    Ok(())
}

fn load_run(c: &Common) -> std::result::Result<(RunConfig, PathBuf), Failure> {
    let path = config_path(c)?;
    let mut cfg: RunConfig = read_config(path)?;
    if let Some(s) = c.seed {
        cfg.train.seed = s;
    }
    cfg.validate()?;
    Ok((cfg, base_dir(path)))
}

fn cmd_train(c: &Common) -> CmdResult {
    let (cfg, base) = load_run(c)?;
    let out = out_dir(c, cfg.output.as_ref())?;
    let d = cfg.dataset.load(&base)?;
    cfg.stack.validate(&d)?;
    let result = train(cfg.family, &d, &cfg.stack, &cfg.train)?;
    let baseline = if cfg.family == Family::Podlr {
        None
    } else {
        podlr_baseline(&d, &cfg.stack)
    };
    if let Some(b) = baseline {
        log::info!(
            "{}: validation one-step MSE {:.4e} (PODLR baseline {b:.4e})",
            cfg.family,
            result.val_physical_mse
        );
    }
    let summary = json!({
        "name": cfg.name,
        "family": cfg.family,
        "epochs": result.epochs,
        "stopped_early": result.stopped_early,
        "val_physical_mse": result.val_physical_mse,
        "baseline_podlr_val_mse": baseline,
        "config_hash": result.surrogate.provenance.config_hash,
    });
    let mut summary_text = serde_json::to_string_pretty(&summary).map_err(Error::from)?;
    summary_text.push('\n');
    result.surrogate.save_with_extras(
        &out,
        c.force,
        &[
            ("train_log.jsonl", log_to_jsonl(&result.log).into_bytes()),
            ("summary.json", summary_text.into_bytes()),
        ],
    )?;
    println!("{}", serde_json::to_string(&summary).map_err(Error::from)?);
    Ok(())
}

/// PODLR with the same latent sizes, for the log's reference line.
fn podlr_baseline(d: &Dataset, stack: &StackSpec) -> Option<f64> {
    let mut plain = stack.clone();
    for g in plain.state_groups.iter_mut().chain(plain.forcing_groups.iter_mut()) {
        g.hidden = None;
    }
    plain.propagator_hidden = None;
    match train(Family::Podlr, d, &plain, &Default::default()) {
        Ok(r) => Some(r.val_physical_mse),
        Err(e) => {
            log::warn!("PODLR baseline unavailable: {e}");
            None
        }
    }
}

fn as_mismatch(e: Error) -> Failure {
    match e {
        Error::Shape(_) | Error::MissingVariable(_) => Failure::Config(e.to_string()),
        other => other.into(),
    }
}

fn cmd_rollout(
    c: &Common,
    surrogate: &Path,
    dataset: &Path,
    horizon: Option<usize>,
    start: Option<usize>,
    decode_per_step: bool,
) -> CmdResult {
    let out = out_dir(c, None)?;
    let s = Surrogate::load(surrogate)?;
    let d = load_dataset(dataset)?;
    let t0 = start.unwrap_or(d.split.val_end);
    let n = d.n_time();
    if t0 + 1 >= n {
        return Err(Failure::Config(format!("start {t0} leaves no steps in {n}")));
    }
    let h = horizon.unwrap_or(n - 1 - t0);
    if h == 0 || t0 + h >= n {
        return Err(Failure::Config(format!("horizon {h} from {t0} exceeds {n} steps")));
    }
    let opts = RolloutOptions {
        decode_per_step,
        keep_latent: false,
    };
    let result = if start.is_none() && horizon.is_none() {
        test_rollout(&s, &d, None, opts).map_err(as_mismatch)?.0
    } else {
        let cols = |kind, r: std::ops::Range<usize>| -> Vec<VariableBlock> {
            d.blocks_of(kind)
                .map(|b| VariableBlock {
                    values: b.values.slice_cols(r.clone()),
                    ..b.clone()
                })
                .collect()
        };
        rollout(
            &s,
            &cols(VariableKind::State, t0..t0 + 1),
            &cols(VariableKind::Forcing, t0..t0 + h + 1),
            h,
            opts,
        )
        .map_err(as_mismatch)?
    };
    let pred = prediction_dataset(&result, &d)?;
    let bench = bench_inference(&s, h, s.model.state_stack.input_dim())?;
    let extra = json!({
        "start": t0,
        "horizon": h,
        "steps": result.steps(),
        "rollout_seconds": result.duration.as_secs_f64(),
        "initial_projection_rmse": result.initial_projection_rmse,
        "divergence": result.divergence,
        "bench": bench,
        "surrogate_config_hash": s.provenance.config_hash,
    });
    save_dataset(&pred, &out, c.force, None, Some(extra))?;
    if let Some(f) = result.divergence {
        log::warn!("rollout diverged at step {}", f.step);
    }
    println!(
        "{}",
        json!({"steps": result.steps(), "steps_per_second": bench.steps_per_second, "environment": bench.environment})
    );
    Ok(())
}

/// Truth blocks aligned with a prediction bundle.
fn aligned_truth(pred_dir: &Path, pred: &Dataset, truth: &Dataset) -> std::result::Result<Vec<VariableBlock>, Failure> {
    let manifest = load_manifest(pred_dir)?;
    let start = manifest
        .extra
        .as_ref()
        .and_then(|e| e.get("start"))
        .and_then(serde_json::Value::as_u64);
    let n = pred.n_time();
    let offset = match start {
        Some(s) => s as usize + 1,
        None if truth.n_time() == n => 0,
        None => {
            return Err(Failure::Mismatch(format!(
                "prediction has {n} steps, truth {} and no start index",
                truth.n_time()
            )))
        }
    };
    if offset + n > truth.n_time() {
        return Err(Failure::Mismatch(format!(
            "prediction steps {offset}..{} exceed the truth's {}",
            offset + n,
            truth.n_time()
        )));
    }
    let mut out = Vec::new();
    for p in &pred.blocks {
        let t = truth
            .block(&p.name)
            .map_err(|_| Failure::Mismatch(format!("truth has no variable `{}`", p.name)))?;
        if t.n_space() != p.n_space() {
            return Err(Failure::Mismatch(format!(
                "`{}` has {} elements in the prediction, {} in the truth",
                p.name,
                p.n_space(),
                t.n_space()
            )));
        }
        out.push(VariableBlock {
            values: t.values.slice_cols(offset..offset + n),
            ..t.clone()
        });
    }
    Ok(out)
}

fn score(pred_dir: &Path, truth: &Dataset, opts: &MetricOptions) -> std::result::Result<(EvalReport, Dataset, Vec<VariableBlock>), Failure> {
    let pred = load_dataset(pred_dir)?;
    let t = aligned_truth(pred_dir, &pred, truth)?;
    let report = evaluate(&t, &pred.blocks, &truth.element_weights, opts).map_err(|e| match e {
        Error::Shape(m) | Error::MissingVariable(m) => Failure::Mismatch(m),
        other => other.into(),
    })?;
    Ok((report, pred, t))
}

fn cmd_evaluate(
    c: &Common,
    pred: &Path,
    truth: &Path,
    reference: Option<&Path>,
    percentiles: Option<&[f64]>,
    csv: bool,
) -> CmdResult {
    let out = out_dir(c, None)?;
    let mut opts = MetricOptions::default();
    if let Some(p) = percentiles {
        let &[lo, hi] = p else {
            return Err(Failure::Config("--percentiles: expected two values `lo,hi`".into()));
        };
        opts.percentiles = (lo, hi);
    }
    let truth_d = load_dataset(truth)?;
    let (mut report, pred_d, aligned) = score(pred, &truth_d, &opts)?;
    if let Some(r) = reference {
        let (ref_report, _, _) = score(r, &truth_d, &opts)?;
        report = report.with_reference(&ref_report).map_err(|e| Failure::Mismatch(e.to_string()))?;
    }
    let csv_text = if csv {
        Some(EvalReport::per_element_csv(&aligned, &pred_d.blocks)?)
    } else {
        None
    };
    write_dir_atomic(&out, c.force, |tmp| {
        write_json(&tmp.join("report.json"), &report)?;
        if let Some(text) = &csv_text {
            write_atomic(&tmp.join("per_element_rmse.csv"), text.as_bytes())?;
        }
        Ok(())
    })?;
    println!("{}", serde_json::to_string(&report).map_err(Error::from)?);
    Ok(())
}

fn run_members(configs: &[RunConfig], base: &Path, threads: Option<usize>) -> std::result::Result<Vec<(RunConfig, forced_rom::Result<ExperimentOutcome>)>, Failure> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Failure::Other(e.to_string()))?;
    Ok(pool.install(|| {
        configs
            .par_iter()
            .map(|cfg| {
                let outcome = run_experiment(cfg, base);
                if let Err(e) = &outcome {
                    log::warn!("run `{}` failed: {e}", cfg.name);
                }
                (cfg.clone(), outcome)
            })
            .collect()
    }))
}

fn write_comparison(c: &Common, out: Option<PathBuf>, runs: &[(RunConfig, forced_rom::Result<ExperimentOutcome>)]) -> CmdResult {
    let table = Comparison {
        rows: runs.iter().map(|(cfg, o)| CompareRow::from_outcome(cfg, o)).collect(),
    };
    let text = table.to_text();
    if let Some(out) = out {
        write_dir_atomic(&out, c.force, |tmp| {
            write_json(&tmp.join("comparison.json"), &table)?;
            write_atomic(&tmp.join("comparison.txt"), text.as_bytes())?;
            for (cfg, o) in runs {
                if let Ok(o) = o {
                    write_atomic(
                        &tmp.join(format!("{}.log.jsonl", cfg.name)),
                        log_to_jsonl(&o.train.log).as_bytes(),
                    )?;
                    write_json(&tmp.join(format!("{}.report.json", cfg.name)), &o.report)?;
                }
            }
            Ok(())
        })?;
    }
    print!("{text}");
    Ok(())
}

fn cmd_compare(c: &Common) -> CmdResult {
    let path = config_path(c)?;
    let mut cfg: CompareConfig = read_config(path)?;
    for r in &mut cfg.runs {
        if let Some(s) = c.seed {
            r.train.seed = s;
        }
    }
    check_compare(&cfg.runs)?;
    for (i, r) in cfg.runs.iter().enumerate() {
        r.validate()
            .map_err(|e| Failure::Config(format!("runs[{i}] ({}): {e}", r.name)))?;
    }
    let runs = run_members(&cfg.runs, &base_dir(path), c.threads)?;
    write_comparison(c, c.out.clone(), &runs)
}

fn cmd_grid(c: &Common) -> CmdResult {
    let path = config_path(c)?;
    let mut grid: GridConfig = read_config(path)?;
    if let Some(s) = c.seed {
        grid.base.train.seed = s;
    }
    let configs = grid.expand()?;
    let runs = run_members(&configs, &base_dir(path), c.threads)?;
    write_comparison(c, c.out.clone(), &runs)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FORCED_ROM_LOG", "warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Generate(c) => cmd_generate(c),
        Command::Train(c) => cmd_train(c),
        Command::Rollout {
            common,
            surrogate,
            dataset,
            horizon,
            start,
            decode_per_step,
        } => cmd_rollout(common, surrogate, dataset, *horizon, *start, *decode_per_step),
        Command::Evaluate {
            common,
            pred,
            truth,
            reference,
            percentiles,
            csv,
        } => cmd_evaluate(common, pred, truth, reference.as_deref(), percentiles.as_deref(), *csv),
        Command::Compare(c) => cmd_compare(c),
        Command::Grid(c) => cmd_grid(c),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
