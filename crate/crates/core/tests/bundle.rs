mod common;

use std::fs;
use std::path::Path;

use forced_rom::data::VariableKind;
use forced_rom::rollout::{rollout, RolloutOptions};
use forced_rom::surrogate::Surrogate;
use forced_rom::training::{train, Family, StackSpec, TrainConfig, UnrollConfig};

fn bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn trained(family: Family, seed: u64) -> Surrogate {
    let d = common::small_linear(3);
    let mut spec = StackSpec::single(&d, 3, 2);
    if family == Family::Kae {
        spec.state_groups[0].hidden = Some(vec![6]);
    }
    let cfg = TrainConfig {
        max_epochs: 4,
        batch_size: 16,
        seed,
        unroll: (family != Family::Podlr).then_some(UnrollConfig {
            steps: 2,
            window_stride: 1,
        }),
        ..TrainConfig::default()
    };
    train(family, &d, &spec, &cfg).unwrap().surrogate
}

fn roll(s: &Surrogate) -> Vec<f64> {
    let d = common::small_linear(3);
    let blocks = |k| d.blocks_of(k).cloned().collect::<Vec<_>>();
    let r = rollout(s, &blocks(VariableKind::State), &blocks(VariableKind::Forcing), 50, RolloutOptions::default())
        .unwrap();
    r.states.into_iter().flat_map(|b| b.values.into_vec()).collect()
}

#[test]
fn round_trip_is_bit_exact_for_every_family() {
    let tmp = tempfile::tempdir().unwrap();
    for family in [Family::Podlr, Family::Podlrt, Family::Podmlp, Family::Lkae, Family::Kae] {
        let s = trained(family, 1);
        let dir = tmp.path().join(family.name());
        s.save(&dir, false).unwrap();
        let back = Surrogate::load(&dir).unwrap();
        assert_eq!(back, s, "{family}");
        let (a, b) = (roll(&s), roll(&back));
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()), "{family}");
        // re-saving the loaded bundle reproduces the same bytes
        let again = tmp.path().join(format!("{}-again", family.name()));
        back.save(&again, false).unwrap();
        assert_eq!(bytes(&dir), bytes(&again), "{family}");
    }
}

#[test]
fn same_seed_same_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    for family in [Family::Podmlp, Family::Kae] {
        let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
        trained(family, 9).save(&a, true).unwrap();
        trained(family, 9).save(&b, true).unwrap();
        assert_eq!(bytes(&a), bytes(&b), "{family}");
        trained(family, 10).save(&b, true).unwrap();
        assert_ne!(bytes(&a), bytes(&b), "{family}");
    }
}

#[test]
fn existing_bundle_needs_force() {
    let tmp = tempfile::tempdir().unwrap();
    let s = trained(Family::Podlr, 0);
    s.save(tmp.path(), false).unwrap_err();
    s.save(tmp.path(), true).unwrap();
}

#[test]
fn tampered_tensor_size_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let s = trained(Family::Lkae, 0);
    let dir = tmp.path().join("b");
    s.save(&dir, false).unwrap();
    let f = dir.join("propagator.c_f.bin");
    let mut raw = fs::read(&f).unwrap();
    raw.truncate(raw.len() - 8);
    fs::write(&f, raw).unwrap();
    assert!(Surrogate::load(&dir).is_err());
}
