//! Acceptance suite. Prints one line per criterion; `ACCEPTANCE_ONLY=4,5`
//! restricts the run and `ACCEPTANCE_STRICT=1` turns a failing criterion
//! into a failing exit status.

mod common;

use std::path::Path;
use std::time::Instant;

use forced_rom::autoencoders::{recon_error_curve, AutoencoderStack, Coder, CoderGroup, PodBasis};
use forced_rom::data::{
    gen_burgers_forced, gen_linear_forced, BurgersSpec, Dataset, LinearSpec, NormStats, VariableBlock, VariableKind,
};
use forced_rom::experiment::{run_experiment, CompareRow, Comparison, DatasetSource, GeneratorSpec, RolloutConfig, RunConfig};
use forced_rom::linalg::{orthonormal_basis, svd_exact, svd_randomized, Matrix};
use forced_rom::metrics::{error_spread, r2, rel_rmse, rmse_weighted, skill_retention, MetricOptions};
use forced_rom::nn::OptimizerConfig;
use forced_rom::propagators::{LatentSpec, LinearPropagator, Propagator};
use forced_rom::rng::{gaussian_matrix, seeded, uniform_matrix};
use forced_rom::rollout::{bench_inference, rollout, RolloutOptions};
use forced_rom::surrogate::{Provenance, Surrogate};
use forced_rom::training::{train, EarlyStopConfig, Family, LatentModel, LossConfig, StackSpec, TrainConfig, UnrollConfig};
use rand::Rng;

enum Status {
    Pass,
    Fail,
    /// A desk analogue of a claimed effect that did not reproduce.
    Falsified,
}

struct Outcome {
    status: Status,
    detail: String,
}

fn judge(ok: bool, detail: String) -> Outcome {
    Outcome {
        status: if ok { Status::Pass } else { Status::Fail },
        detail,
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn raw_stack(d: &Dataset, nx: usize, nu: usize) -> StackSpec {
    let mut s = StackSpec::single(d, nx, nu);
    s.normalize = false;
    s.pod_centering = false;
    s
}

// 1 ---------------------------------------------------------------------

fn linear_identifiability() -> Outcome {
    let started = Instant::now();
    let spec = LinearSpec {
        n_x: 40,
        n_u: 4,
        n_t: 5000,
        spectral_radius: 0.95,
        ..LinearSpec::default()
    };
    let (d, truth) = gen_linear_forced(&spec, 1).unwrap();
    let s = train(Family::Podlr, &d, &raw_stack(&d, 40, 4), &TrainConfig::default())
        .unwrap()
        .surrogate;

    let Propagator::Linear(p) = &s.model.propagator else {
        unreachable!()
    };
    let modes = |st: &AutoencoderStack| match &st.groups[0].coder {
        Coder::Pod(b) => b.modes.clone(),
        Coder::Neural(_) => unreachable!(),
    };
    let (px, pu) = (modes(&s.model.state_stack), modes(&s.model.forcing_stack));
    let l = s.latent();
    let lift = |c: std::ops::Range<usize>, right: &Matrix| px.matmul(&p.a.slice_cols(c)).unwrap().matmul_t(right).unwrap();
    let recovered = Matrix::hstack(&[
        &lift(0..l.state, &px),
        &lift(l.state..l.state + l.forcing, &pu),
        &lift(l.state + l.forcing..l.input_dim(), &pu),
    ])
    .unwrap();
    let want = truth.stacked();
    let op_err = recovered.sub(&want).unwrap().frobenius_norm() / want.frobenius_norm();

    let start = d.split.val_end;
    let horizon = 500;
    let from = |name: &str| {
        let b = d.block(name).unwrap();
        VariableBlock {
            values: b.values.slice_cols(start..b.values.cols()),
            ..b.clone()
        }
    };
    let r = rollout(&s, &[from("x")], &[from("u")], horizon, RolloutOptions::default()).unwrap();
    let x = &d.block("x").unwrap().values;
    let mut max_err: f64 = 0.0;
    for k in 0..horizon {
        for i in 0..spec.n_x {
            max_err = max_err.max((r.states[0].values[(i, k)] - x[(i, start + k + 1)]).abs());
        }
    }
    let secs = started.elapsed().as_secs_f64();
    judge(
        op_err < 1e-6 && max_err < 1e-8 && secs < 30.0,
        format!("operator rel err {op_err:.2e} (<1e-6), 500-step max err {max_err:.2e} (<1e-8), {secs:.1}s (<30s)"),
    )
}

// 2 ---------------------------------------------------------------------

fn randomized_svd_fidelity() -> Outcome {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let a = gaussian_matrix(&mut seeded(seed), 100, 200);
        let exact = svd_exact(&a).unwrap();
        let approx = svd_randomized(&a, 10, 10, 2, seed + 1000).unwrap();
        for k in 0..10 {
            worst = worst.max((approx.s[k] - exact.s[k]).abs() / exact.s[k]);
        }
    }
    let secs = started.elapsed().as_secs_f64();
    judge(
        worst < 1e-6 && secs < 10.0,
        format!("worst top-10 singular value rel err {worst:.2e} (<1e-6), {secs:.2}s (<10s)"),
    )
}

// 3 ---------------------------------------------------------------------

fn gradient_correctness() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for arch in common::Arch::ALL {
        let worst = (0..20)
            .map(|seed| common::fd_relative_error(&common::case(arch, seed), 1e-6))
            .fold(0.0, f64::max);
        ok &= worst < arch.tolerance();
        parts.push(format!("{arch:?} {worst:.1e}"));
    }
    judge(ok, format!("20 seeds each, worst rel err: {}", parts.join(", ")))
}

// 4 ---------------------------------------------------------------------

fn unstable_dataset(seed: u64) -> Dataset {
    let spec = LinearSpec {
        n_x: 6,
        n_u: 2,
        n_t: 200,
        spectral_radius: 1.05,
        allow_unstable: true,
        ..LinearSpec::default()
    };
    gen_linear_forced(&spec, seed).unwrap().0
}

fn stabilized_radius(d: &Dataset, alpha_eig: f64, seed: u64) -> f64 {
    // long run without early stopping; the plateau schedule anneals the
    // learning rate so the operator settles instead of hovering at |λ| = 1
    let cfg = TrainConfig {
        max_epochs: 600,
        batch_size: 32,
        seed,
        optimizer: OptimizerConfig {
            lr: 1e-2,
            ..OptimizerConfig::default()
        },
        early_stop: EarlyStopConfig {
            tolerance: 0.0,
            patience: 600,
        },
        loss: Some(LossConfig {
            alpha_pred: 1.0,
            alpha_recon: 0.0,
            alpha_eig,
        }),
        ..TrainConfig::default()
    };
    let mut stack = StackSpec::single(d, 6, 2);
    stack.pod_centering = false;
    let r = train(Family::Podlrt, d, &stack, &cfg).unwrap();
    r.surrogate.model.propagator.inner_spectral_radius().unwrap()
}

fn stability_regularization() -> Outcome {
    let mut hits = 0;
    let mut rows = Vec::new();
    for seed in 0..5 {
        let d = unstable_dataset(seed);
        let with = stabilized_radius(&d, 1.0, seed);
        let without = stabilized_radius(&d, 0.0, seed);
        if with <= 1.0 + 1e-6 && without > 1.0 {
            hits += 1;
        }
        rows.push(format!("{with:.7}/{without:.4}"));
    }
    judge(
        hits >= 4,
        format!("{hits}/5 seeds (need ≥4); radius with/without penalty: {}", rows.join(" ")),
    )
}

// 5, 6 ------------------------------------------------------------------

const BURGERS_LATENT: usize = 8;

fn burgers_run(name: &str, family: Family, seed: u64, unroll: Option<usize>, horizon: Option<usize>) -> RunConfig {
    let spec = BurgersSpec {
        n_cells: 128,
        n_t: 4000,
        ..BurgersSpec::default()
    };
    let dataset = DatasetSource::Generate(GeneratorSpec::Burgers { spec, seed });
    let d = gen_burgers_forced(
        &BurgersSpec {
            n_t: 10,
            ..BurgersSpec::default()
        },
        0,
    )
    .unwrap();
    let stack = StackSpec::single(&d, BURGERS_LATENT, 1);
    let train = TrainConfig {
        max_epochs: 100,
        batch_size: 64,
        seed,
        optimizer: OptimizerConfig {
            lr: 3e-3,
            ..Default::default()
        },
        unroll: unroll.map(|steps| UnrollConfig { steps, window_stride: 1 }),
        ..TrainConfig::default()
    };
    RunConfig {
        name: name.to_string(),
        dataset,
        family,
        stack,
        train,
        rollout: RolloutConfig {
            horizon,
            decode_per_step: false,
        },
        metrics: MetricOptions::default(),
        output: None,
    }
}

fn rel_of(cfg: &RunConfig) -> f64 {
    let o = run_experiment(cfg, Path::new(".")).unwrap();
    o.report.variables[0].rel_rmse
}

fn unrolling_benefit() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for family in [Family::Podlrt, Family::Lkae] {
        let mut one = Vec::new();
        let mut ten = Vec::new();
        for seed in 0..5 {
            one.push(rel_of(&burgers_run("tu1", family, seed, Some(1), Some(200))));
            ten.push(rel_of(&burgers_run("tu10", family, seed, Some(10), Some(200))));
        }
        let (m1, m10) = (median(one), median(ten));
        ok &= m10 <= m1;
        parts.push(format!("{family}: N_TU=10 {m10:.4e} vs N_TU=1 {m1:.4e} (ratio {:.3})", m10 / m1));
    }
    judge(ok, format!("median 200-step rel_rmse over 5 seeds; {}", parts.join("; ")))
}

fn kae_vs_pod() -> Outcome {
    let mut rows = Vec::new();
    let mut lkae = Vec::new();
    let mut podlr = Vec::new();
    for seed in 0..5 {
        for (family, unroll, sink) in [(Family::Lkae, Some(10), &mut lkae), (Family::Podlr, None, &mut podlr)] {
            let cfg = burgers_run(&format!("{}-{seed}", family.name()), family, seed, unroll, None);
            let outcome = run_experiment(&cfg, Path::new("."));
            let row = CompareRow::from_outcome(&cfg, &outcome);
            sink.push(outcome.unwrap().report.variables[0].rel_rmse);
            rows.push(row);
        }
    }
    let table = Comparison { rows }.to_text();
    println!("{table}");
    let (a, b) = (median(lkae), median(podlr));
    let detail = format!("median test rel_rmse LKAE(TU) {a:.4e} vs PODLR {b:.4e}");
    if a <= b {
        judge(true, detail)
    } else {
        Outcome {
            status: Status::Falsified,
            detail,
        }
    }
}

// 7 ---------------------------------------------------------------------

fn loop_oracles(truth: &Matrix, pred: &Matrix, w: &[f64], pct: (f64, f64)) -> (f64, f64, f64, (f64, f64)) {
    let (n, t) = truth.shape();
    let wsum: f64 = w.iter().sum();
    let wn: Vec<f64> = w.iter().map(|x| x * n as f64 / wsum).collect();
    let mut mean_num = 0.0;
    let mut mean_den = 0.0;
    for i in 0..n {
        for k in 0..t {
            mean_num += wn[i] * truth[(i, k)];
            mean_den += wn[i];
        }
    }
    let mean = mean_num / mean_den;
    let (mut res, mut tot, mut sq) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for k in 0..t {
            let e = truth[(i, k)] - pred[(i, k)];
            res += wn[i] * e * e;
            tot += wn[i] * (truth[(i, k)] - mean).powi(2);
            sq += wn[i] * e * e;
        }
    }
    let mut rel = 0.0;
    let mut ranges = vec![0.0; n];
    for i in 0..n {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut acc = 0.0;
        for k in 0..t {
            lo = lo.min(truth[(i, k)]);
            hi = hi.max(truth[(i, k)]);
            acc += wn[i] * (truth[(i, k)] - pred[(i, k)]).powi(2);
        }
        ranges[i] = hi - lo;
        rel += (acc / t as f64).sqrt() / ranges[i];
    }
    let mut peaks = Vec::new();
    for k in 0..t {
        let mut m: f64 = 0.0;
        for i in 0..n {
            m = m.max((truth[(i, k)] - pred[(i, k)]).abs() / ranges[i]);
        }
        peaks.push(m);
    }
    peaks.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p / 100.0 * (t - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        peaks[lo] + (pos - lo as f64) * (peaks[hi] - peaks[lo])
    };
    (
        1.0 - res / tot,
        (sq / (n * t) as f64).sqrt(),
        rel / n as f64,
        (q(pct.0), q(pct.1)),
    )
}

fn metric_fidelity() -> Outcome {
    let mut rng = seeded(77);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..6);
        let t = rng.random_range(2..25);
        let truth = gaussian_matrix(&mut rng, n, t);
        let pred = truth.add(&gaussian_matrix(&mut rng, n, t).scale(0.3)).unwrap();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
        let pct = (rng.random_range(0.0..50.0), rng.random_range(50.0..100.0));
        let (o_r2, o_rmse, o_rel, o_spread) = loop_oracles(&truth, &pred, &w, pct);
        let spread = error_spread(&truth, &pred, pct).unwrap();
        for (got, want) in [
            (r2(&truth, &pred, &w).unwrap(), o_r2),
            (rmse_weighted(&truth, &pred, &w).unwrap(), o_rmse),
            (rel_rmse(&truth, &pred, &w).unwrap(), o_rel),
            (spread.0, o_spread.0),
            (spread.1, o_spread.1),
        ] {
            worst = worst.max((got - want).abs() / want.abs().max(1.0));
        }
    }
    let ijva = skill_retention(16.4, 14.7).unwrap();
    let drogden = skill_retention(6.23, 6.27).unwrap();
    let ok = worst < 1e-12 && (ijva - 11.5646).abs() < 1e-3 && ijva.round() == 12.0 && (drogden + 0.638).abs() < 1e-3;
    judge(
        ok,
        format!("worst oracle diff {worst:.1e} (<1e-12) over 100 instances; IJVA {ijva:+.2}%, Drogden {drogden:+.2}%"),
    )
}

// 8 ---------------------------------------------------------------------

fn monotone_pod_curve() -> Outcome {
    let (lin, _) = gen_linear_forced(
        &LinearSpec {
            n_x: 30,
            n_u: 3,
            n_t: 400,
            ..LinearSpec::default()
        },
        4,
    )
    .unwrap();
    let burgers = gen_burgers_forced(
        &BurgersSpec {
            n_t: 1000,
            ..BurgersSpec::default()
        },
        4,
    )
    .unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, d) in [("linear", &lin), ("burgers", &burgers)] {
        for b in &d.blocks {
            let max_r = b.values.rows().min(b.values.cols());
            let ranks: Vec<usize> = (1..=max_r.min(30)).collect();
            let curve = recon_error_curve(&b.values, &ranks, 3).unwrap();
            let worst_rise = curve.windows(2).map(|p| p[1] - p[0]).fold(f64::NEG_INFINITY, f64::max);
            ok &= worst_rise <= 1e-9 || curve.len() < 2;
            parts.push(format!(
                "{name}/{} {:.2e}→{:.2e}",
                b.name,
                curve[0],
                curve[curve.len() - 1]
            ));
        }
    }
    judge(ok, format!("non-increasing within 1e-9: {}", parts.join(", ")))
}

// 9 ---------------------------------------------------------------------

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let d = common::small_linear(8);
    let mut ok = true;
    let mut checked = Vec::new();
    for family in [Family::Podlr, Family::Podlrt, Family::Podmlp, Family::Lkae, Family::Kae] {
        let cfg = TrainConfig {
            max_epochs: 5,
            batch_size: 16,
            seed: 21,
            unroll: (family != Family::Podlr).then_some(UnrollConfig {
                steps: 3,
                window_stride: 2,
            }),
            ..TrainConfig::default()
        };
        let spec = StackSpec::single(&d, 3, 2);
        let run = |tag: &str| {
            let s = train(family, &d, &spec, &cfg).unwrap().surrogate;
            let dir = tmp.path().join(format!("{}-{tag}", family.name()));
            s.save(&dir, false).unwrap();
            (s, dir)
        };
        let (a, da) = run("a");
        let (_, db) = run("b");
        let loaded = Surrogate::load(&da).unwrap();
        let blocks = |k| d.blocks_of(k).cloned().collect::<Vec<_>>();
        let roll = |s: &Surrogate| {
            rollout(s, &blocks(VariableKind::State), &blocks(VariableKind::Forcing), 80, RolloutOptions::default())
                .unwrap()
                .states[0]
                .values
                .as_slice()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        };
        let same = dir_bytes(&da) == dir_bytes(&db) && loaded == a && roll(&a) == roll(&loaded);
        ok &= same;
        checked.push(format!("{family} {}", if same { "ok" } else { "DIFFERS" }));
    }
    judge(ok, format!("bundle bytes, round trip and rollout bits: {}", checked.join(", ")))
}

// 10 --------------------------------------------------------------------

fn throughput_surrogate(n_x: usize, n_u: usize, lx: usize, lu: usize) -> Surrogate {
    let mut rng = seeded(5);
    let basis = |n: usize, r: usize, rng: &mut _| PodBasis {
        modes: orthonormal_basis(&gaussian_matrix(rng, n, r)).unwrap(),
        mean: vec![0.0; n],
        energy: vec![1.0 / r as f64; r],
        singular_values: vec![1.0; r],
        centered: true,
    };
    let stack = |name: &str, n: usize, r: usize, rng: &mut _| {
        AutoencoderStack::new(vec![CoderGroup {
            variables: vec![(name.to_string(), n)],
            coder: Coder::Pod(basis(n, r, rng)),
        }])
        .unwrap()
    };
    let latent = LatentSpec { state: lx, forcing: lu };
    let k = 0.9 / (latent.input_dim() as f64).sqrt();
    let a = uniform_matrix(&mut rng, lx, latent.input_dim(), -k, k);
    let model = LatentModel::new(
        stack("x", n_x, lx, &mut rng),
        stack("u", n_u, lu, &mut rng),
        Propagator::Linear(LinearPropagator::new(a, latent).unwrap()),
    )
    .unwrap();
    let d = Dataset::new(
        vec![
            VariableBlock::new("x", VariableKind::State, Matrix::zeros(n_x, 2), ""),
            VariableBlock::new("u", VariableKind::Forcing, Matrix::zeros(n_u, 2), ""),
        ],
        1800.0,
    )
    .unwrap();
    Surrogate {
        family: Family::Podlr,
        norm: NormStats::identity(&d),
        model,
        provenance: Provenance {
            family: Family::Podlr,
            config_hash: String::new(),
            seed: 5,
            log_digest: String::new(),
            config: serde_json::Value::Null,
        },
    }
}

fn inference_throughput() -> Outcome {
    let n_x = 9960;
    let s = throughput_surrogate(n_x, 168, 15, 50);
    let report = bench_inference(&s, 17520, n_x).unwrap();
    judge(
        report.seconds < 60.0,
        format!(
            "17520 steps at n_x=9960, latent 15/50: {:.2}s (<60s), {:.0} steps/s on {}",
            report.seconds, report.steps_per_second, report.environment
        ),
    )
}

// -----------------------------------------------------------------------

type Criterion = (usize, &'static str, fn() -> Outcome);

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let criteria: [Criterion; 10] = [
        (1, "linear identifiability", linear_identifiability),
        (2, "randomized SVD fidelity", randomized_svd_fidelity),
        (3, "gradient correctness", gradient_correctness),
        (4, "stability regularization", stability_regularization),
        (5, "temporal unrolling benefit", unrolling_benefit),
        (6, "KAE vs POD ordering", kae_vs_pod),
        (7, "metric fidelity", metric_fidelity),
        (8, "monotone POD curve", monotone_pod_curve),
        (9, "determinism and bundle integrity", determinism),
        (10, "inference throughput", inference_throughput),
    ];
    let mut failed = Vec::new();
    for (id, title, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let started = Instant::now();
        let out = f();
        let tag = match out.status {
            Status::Pass => "PASS",
            Status::Fail => {
                failed.push(id);
                "FAIL"
            }
            Status::Falsified => "FALSIFIED",
        };
        println!(
            "criterion {id:>2} {tag:<9} {title}: {} [{:.1}s]",
            out.detail,
            started.elapsed().as_secs_f64()
        );
    }
    if failed.is_empty() {
        println!("acceptance: no failing criteria");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        if std::env::var_os("ACCEPTANCE_STRICT").is_some() {
            std::process::exit(1);
        }
    }
}
