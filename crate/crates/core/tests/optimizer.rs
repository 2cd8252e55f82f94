use euv_ilt::generator::GeneratorMode;
use euv_ilt::optimizer::{
    ablate, improvement_pct, train, train_kind, train_shared, write_history_csv, Adam, TrainConfig,
    BETA1, BETA2, EPSILON,
};
use euv_ilt::patterns::{render, Grid, PatternKind, PatternSpec, Sample};
use euv_ilt::physics::{activate, PhysicsParams, StageFlags};
use euv_ilt::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PX: f64 = 6.328;

fn small_samples(kind: PatternKind, n: usize) -> Vec<Sample> {
    (0..n)
        .map(|i| {
            let spec = PatternSpec {
                grid: Grid {
                    width: 32,
                    height: 32,
                    pixel_size_nm: PX,
                },
                offset_px: (i as i64 * 2, i as i64),
                ..PatternSpec::canonical(kind)
            };
            let field = render(&spec).unwrap();
            Sample {
                aspect_ratio: spec.aspect_ratio(),
                spec,
                field,
            }
        })
        .collect()
}

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        dataset_size: Some(3),
        ..TrainConfig::default()
    }
}

#[test]
fn zero_gradient_leaves_parameters_alone() {
    let mut adam = Adam::new(3, 0.1);
    let mut p = [1.0, -2.0, 3.0];
    for _ in 0..10 {
        adam.step(&mut p, &[0.0; 3]).unwrap();
    }
    assert_eq!(p, [1.0, -2.0, 3.0]);
    assert_eq!(adam.steps(), 10);
}

#[test]
fn first_step_by_hand() {
    let (lr, g) = (0.01, 0.3);
    let mut adam = Adam::new(1, lr);
    let mut p = [0.5];
    adam.step(&mut p, &[g]).unwrap();
    let m = (1.0 - BETA1) * g;
    let v = (1.0 - BETA2) * g * g;
    let m_hat = m / (1.0 - BETA1);
    let v_hat = v / (1.0 - BETA2);
    let want = 0.5 - lr * m_hat / (v_hat.sqrt() + EPSILON);
    assert!((p[0] - want).abs() < 1e-15);
    // Leading order: one full lr step against the gradient sign.
    assert!((p[0] - (0.5 - lr)).abs() < 1e-9);
}

#[test]
fn constant_gradient_steps_at_the_learning_rate() {
    let lr = 1e-3;
    let mut adam = Adam::new(2, lr);
    let mut p = [0.0, 0.0];
    for _ in 0..999 {
        adam.step(&mut p, &[2.5, -0.7]).unwrap();
    }
    let before = p;
    adam.step(&mut p, &[2.5, -0.7]).unwrap();
    assert_eq!(adam.steps(), 1000);
    assert!(((before[0] - p[0]) - lr).abs() < 1e-9);
    assert!(((p[1] - before[1]) - lr).abs() < 1e-9);
}

#[test]
fn non_finite_gradient_is_rejected_without_side_effects() {
    let mut adam = Adam::new(2, 0.1);
    let mut p = [1.0, 2.0];
    adam.step(&mut p, &[0.5, -0.5]).unwrap();
    let (snap_p, snap) = (p, adam.clone());
    assert!(matches!(
        adam.step(&mut p, &[f64::NAN, 1.0]),
        Err(Error::Numerical(_))
    ));
    assert!(matches!(
        adam.step(&mut p, &[1.0, f64::INFINITY]),
        Err(Error::Numerical(_))
    ));
    assert_eq!(p, snap_p);
    assert_eq!(adam, snap);
    assert!(matches!(
        adam.step(&mut p, &[1.0]),
        Err(Error::Dimension(_))
    ));
}

#[test]
fn overflowing_update_is_rejected() {
    let mut adam = Adam::new(1, 1e308);
    let mut p = [1e308];
    assert!(matches!(
        adam.step(&mut p, &[-1.0]),
        Err(Error::Numerical(_))
    ));
    assert_eq!(p, [1e308]);
    assert_eq!(adam.steps(), 0);
}

#[test]
fn random_updates_keep_effective_parameters_in_range() {
    for lr in [1e-2f64, 1.0] {
        let mut rng = ChaCha8Rng::seed_from_u64(lr.to_bits());
        let mut adam = Adam::new(5, lr);
        let mut raw = [0.0; 5];
        for _ in 0..10_000 {
            let g: Vec<f64> = (0..5).map(|_| rng.gen_range(-100.0..100.0)).collect();
            adam.step(&mut raw, &g).unwrap();
            let e = activate(&PhysicsParams::from_array(raw), PX).unwrap();
            assert!(e.within_bounds(), "{e:?} at lr {lr}");
        }
    }
}

#[test]
fn identity_physics_keeps_edges_in_place() {
    let samples = small_samples(PatternKind::EuvContacts, 3);
    let cfg = TrainConfig {
        stages: StageFlags::NONE,
        ..quick(3)
    };
    let res = train(&samples, &cfg).unwrap();
    assert_eq!(res.initial.epe_nm, 0.0);
    // The masks drift slightly under training; edges stay put.
    assert!(res.final_epe_nm() < 1e-4);
    assert!(res.abort.is_none());
}

#[test]
fn training_is_deterministic() {
    let samples = small_samples(PatternKind::DramArrays, 3);
    let cfg = quick(4);
    let a = train(&samples, &cfg).unwrap();
    let b = train(&samples, &cfg).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.last, b.last);
    let dir = tempfile::tempdir().unwrap();
    let (pa, pb) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    write_history_csv(&pa, &a.history).unwrap();
    write_history_csv(&pb, &b.history).unwrap();
    let bytes = std::fs::read(&pa).unwrap();
    assert_eq!(bytes, std::fs::read(&pb).unwrap());
    let text = String::from_utf8(bytes).unwrap();
    assert!(text.starts_with("epoch,total,recon,edge,reg,epe_nm,d,a,blur_nm,phase,c\n"));
    assert!(!text.contains('\r'));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn history_and_checkpoints() {
    let samples = small_samples(PatternKind::EuvContacts, 3);
    let one = train(&samples, &quick(1)).unwrap();
    assert_eq!(one.history.len(), 1);
    assert_eq!(one.epoch_seconds.len(), 1);
    assert_eq!(one.initial.epoch, None);

    let cfg = TrainConfig {
        checkpoint_every: 2,
        ..quick(5)
    };
    let res = train(&samples, &cfg).unwrap();
    assert!(res.initial.epe_nm.is_finite() && res.initial.epe_nm > 0.0);
    assert_eq!(res.history.len(), 5);
    let kept: Vec<_> = res.checkpoints.iter().map(|c| c.epoch).collect();
    assert_eq!(kept, [Some(1), Some(3)]);
    let min = res
        .history
        .iter()
        .map(|r| r.epe_nm)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(res.best_epe_nm(), min);
    assert!(res.best_epe_nm() <= res.final_epe_nm());
    assert_eq!(res.last.epoch, Some(4));
    for r in &res.history {
        assert!(r.effective.within_bounds());
        assert!(r.loss.total.is_finite());
    }
}

#[test]
fn non_finite_update_aborts_with_last_good_state() {
    let samples = small_samples(PatternKind::EuvContacts, 2);
    let cfg = TrainConfig {
        lr_physics: 1e308,
        ..quick(3)
    };
    let res = train(&samples, &cfg).unwrap();
    let msg = res.abort.as_deref().expect("abort");
    assert!(msg.starts_with("epoch 0"), "{msg}");
    assert_eq!(res.last, res.initial);
    assert!(res.final_epe_nm().is_finite());
    assert!(res.history.len() < 3);
}

#[test]
fn ablation_rows() {
    let samples = small_samples(PatternKind::EuvContacts, 2);
    let rows = ablate(&samples, &quick(1), &[0]).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].label, "no_physics");
    assert_eq!(rows[0].stages, StageFlags::NONE);
    assert!(rows[0].final_epe_nm < 1e-4);
    assert!(matches!(
        ablate(&samples, &quick(1), &[6]),
        Err(Error::Config(_))
    ));
}

#[test]
fn cnn_mode_trains_deterministically() {
    let samples = small_samples(PatternKind::EuvContacts, 2);
    let cfg = TrainConfig {
        mode: GeneratorMode::MiniCnn,
        ..quick(2)
    };
    let a = train(&samples, &cfg).unwrap();
    let b = train(&samples, &cfg).unwrap();
    assert_eq!(a.history, b.history);
    assert!(a.last.logits.is_none());
    assert!(a.abort.is_none());
}

#[test]
fn config_defaults_and_validation() {
    let cfg: TrainConfig = serde_json::from_str("{}").unwrap();
    assert_eq!(cfg, TrainConfig::default());
    assert_eq!(cfg.epochs, 500);
    assert_eq!(cfg.lr_physics / cfg.lr_generator, 100.0);
    assert_eq!(cfg.mode, GeneratorMode::PixelDirect);
    assert!((48..=52).contains(&cfg.resolved_dataset_size()));
    assert!(serde_json::from_str::<TrainConfig>(r#"{"epoch": 3}"#).is_err());
    for bad in [
        TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        },
        TrainConfig {
            lr_physics: -1.0,
            ..TrainConfig::default()
        },
        TrainConfig {
            dataset_size: Some(0),
            ..TrainConfig::default()
        },
    ] {
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }
    assert!(matches!(train(&[], &quick(1)), Err(Error::Config(_))));
}

#[test]
fn improvement_percentages() {
    assert_eq!(improvement_pct(4.5, 0.9), 80.0);
    assert_eq!(improvement_pct(0.0, 1.0), 0.0);
    assert!(improvement_pct(2.0, 3.0) < 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adam_moves_against_the_gradient(
        g in prop::collection::vec(-1e3f64..1e3, 1..8),
        lr in 1e-4f64..1.0,
    ) {
        let mut adam = Adam::new(g.len(), lr);
        let mut p = vec![0.0; g.len()];
        adam.step(&mut p, &g).unwrap();
        for (pi, gi) in p.iter().zip(&g) {
            prop_assert!(pi.abs() <= lr * (1.0 + 1e-12));
            if gi.abs() > 1e-3 {
                prop_assert!(pi * gi < 0.0);
            }
        }
    }
}

#[test]
fn shared_training_of_one_kind_is_a_plain_run() {
    let cfg = TrainConfig {
        dataset_size: Some(2),
        ..quick(2)
    };
    let kind = PatternKind::EuvContacts;
    let alone = train_kind(kind, &cfg).unwrap();
    let shared = train_shared(&[kind], &cfg).unwrap();
    assert_eq!(shared.run.history, alone.history);
    assert_eq!(shared.kinds[0].last, alone.last);
    assert_eq!(shared.kinds[0].best_epe_nm, alone.best_epe_nm());
}

#[test]
fn shared_training_scores_every_kind() {
    let cfg = TrainConfig {
        dataset_size: Some(2),
        ..quick(2)
    };
    let kinds = [PatternKind::StiPattern, PatternKind::DramArrays];
    let r = train_shared(&kinds, &cfg).unwrap();
    assert_eq!(r.run.kind, PatternKind::StiPattern);
    assert_eq!(r.kinds.len(), 2);
    for (k, s) in kinds.iter().zip(&r.kinds) {
        assert_eq!(s.kind, *k);
        assert!(s.best_epe_nm <= s.last.epe_nm);
        // One physics model for all kinds.
        assert_eq!(s.last.params, r.run.last.params);
    }
    assert_eq!(r.kinds[0].last.epe_nm, r.run.final_epe_nm());
    assert!(matches!(train_shared(&[], &cfg), Err(Error::Config(_))));
}
