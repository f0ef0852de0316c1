mod common;

use forced_rom::data::{gen_burgers_forced, gen_linear_forced, BurgersSpec, Dataset, LinearSpec, VariableBlock, VariableKind};
use forced_rom::nn::OptimizerConfig;
use forced_rom::rng::{gaussian_matrix, seeded};
use forced_rom::training::{train, EarlyStopConfig, Family, LossConfig, StackSpec, TrainConfig};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn kae_eig_penalty_stabilizes_an_unstable_system() {
    let spec = LinearSpec {
        n_x: 6,
        n_u: 2,
        n_t: 200,
        spectral_radius: 1.05,
        allow_unstable: true,
        ..LinearSpec::default()
    };
    let (d, _) = gen_linear_forced(&spec, 3).unwrap();
    let cfg = TrainConfig {
        max_epochs: 400,
        batch_size: 32,
        seed: 3,
        optimizer: OptimizerConfig {
            lr: 1e-2,
            ..OptimizerConfig::default()
        },
        early_stop: EarlyStopConfig {
            tolerance: 0.0,
            patience: 400,
        },
        loss: Some(LossConfig {
            alpha_pred: 1.0,
            alpha_recon: 1.0,
            alpha_eig: 1.0,
        }),
        ..TrainConfig::default()
    };
    let r = train(Family::Kae, &d, &StackSpec::single(&d, 6, 2), &cfg).unwrap();
    let rho = r.surrogate.model.propagator.inner_spectral_radius().unwrap();
    assert!(rho <= 1.0 + 1e-6, "{rho}");
}

/// Latent-linear system seen through a random full-rank linear map.
fn observed_linear(seed: u64) -> Dataset {
    let spec = LinearSpec {
        n_x: 4,
        n_u: 2,
        n_t: 600,
        ..LinearSpec::default()
    };
    let (mut d, _) = gen_linear_forced(&spec, seed).unwrap();
    let map = gaussian_matrix(&mut seeded(seed + 40), 12, 4);
    let x = &d.block("x").unwrap().values;
    let y = map.matmul(x).unwrap();
    d.blocks[0] = VariableBlock::new("x", VariableKind::State, y, "");
    d.element_weights = vec![1.0 / 12.0; 12];
    d.validate().unwrap();
    d
}

#[test]
fn lkae_learns_an_observed_linear_system() {
    let rel: Vec<f64> = (0..5)
        .map(|seed| {
            let d = observed_linear(seed);
            let cfg = TrainConfig {
                max_epochs: 300,
                batch_size: 32,
                seed,
                optimizer: OptimizerConfig {
                    lr: 1e-2,
                    ..OptimizerConfig::default()
                },
                ..TrainConfig::default()
            };
            let r = train(Family::Lkae, &d, &StackSpec::single(&d, 4, 2), &cfg).unwrap();
            // one-step MSE is reported in normalized units, where the data
            // have unit variance
            r.val_physical_mse
        })
        .collect();
    let m = median(rel.clone());
    assert!(m < 1e-3, "{rel:?}");
}

#[test]
fn training_loss_falls_over_the_first_ten_epochs() {
    let lin = common::small_linear(2);
    let burgers = gen_burgers_forced(
        &BurgersSpec {
            n_cells: 64,
            n_t: 400,
            ..BurgersSpec::default()
        },
        2,
    )
    .unwrap();
    for (name, d) in [("linear", &lin), ("burgers", &burgers)] {
        let (nx, nu) = (3, d.block(&d.names_of(VariableKind::Forcing)[0]).unwrap().n_space().min(2));
        for family in [Family::Podlrt, Family::Podmlp, Family::Lkae, Family::Kae] {
            let drops: Vec<f64> = (0..3)
                .map(|seed| {
                    let cfg = TrainConfig {
                        max_epochs: 10,
                        batch_size: 32,
                        seed,
                        ..TrainConfig::default()
                    };
                    let log = train(family, d, &StackSpec::single(d, nx, nu), &cfg).unwrap().log;
                    log[0].train_total - log[log.len() - 1].train_total
                })
                .collect();
            assert!(median(drops.clone()) >= 0.0, "{name} {family}: {drops:?}");
        }
    }
}

#[test]
fn one_step_mse_of_exact_podlr_is_tiny() {
    let (d, _) = gen_linear_forced(
        &LinearSpec {
            n_x: 8,
            n_u: 2,
            n_t: 400,
            ..LinearSpec::default()
        },
        6,
    )
    .unwrap();
    let mut stack = StackSpec::single(&d, 8, 2);
    stack.normalize = false;
    stack.pod_centering = false;
    let r = train(Family::Podlr, &d, &stack, &TrainConfig::default()).unwrap();
    assert!(r.val_physical_mse < 1e-10, "{}", r.val_physical_mse);
}
