//! LOSO harness, training setups, tuning and the divergence matrix.

mod common;

use egd_core::dataio::{split_loso_folds, GestureClass, TaskClass, TrialRecord};
use egd_core::eval::{
    histogram, kl_divergence, kld_matrix, nested_tune, run_loso, run_loso_tuned, scope_instances,
    symmetric_kl, ConstantStub, EvalError, LosoOptions, NearestCentroidFactory, NetworkFactory,
    OracleStub, TrainingSetup, TuningGrid,
};
use egd_core::models::{Architecture, Scope};
use proptest::prelude::*;

fn twenty() -> Vec<TrialRecord> {
    common::trials(&["B", "C"], 21)
}

#[test]
fn symmetric_kl_of_two_coins() {
    // D(p‖q) = ½ln(5/9) + ½ln5, D(q‖p) = 0.9 ln1.8 + 0.1 ln0.2
    let (p, q) = ([0.5, 0.5], [0.9, 0.1]);
    assert!((kl_divergence(&p, &q) - 0.510_825_623_765_990_7).abs() < 1e-15);
    assert!((kl_divergence(&q, &p) - 0.368_064_207_168_497_1).abs() < 1e-15);
    assert!((symmetric_kl(&p, &q) - 0.439_444_915_467_243_9).abs() < 1e-15);
}

#[test]
fn histogram_is_a_smoothed_distribution() {
    let h = histogram(&[0.0, 0.5, 1.0, 1.0], 0.0, 1.0, 4);
    assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    // the top edge lands in the last bin
    assert!(h[3] > 0.49 && h[2] > 0.24 && h[0] > 0.24);
    assert!(h[1] > 0.0 && h[1] < 1e-9);
    let flat = histogram(&[2.0; 5], 2.0, 2.0, 3);
    assert!(flat[0] > 0.99);
}

#[test]
fn divergence_matrix_is_symmetric_with_zero_diagonal() {
    let trials = twenty();
    let m = kld_matrix(&trials, 50).unwrap();
    let n = m.classes.len();
    assert!(n >= 10, "{n} classes");
    for i in 0..n {
        assert!(m.values[i][i].abs() < 1e-12);
        for j in 0..n {
            assert_eq!(m.values[i][j], m.values[j][i]);
            assert!(m.values[i][j] >= 0.0);
        }
    }
    // distinct classes are not identical
    assert!((0..n).any(|i| (0..n).any(|j| m.values[i][j] > 0.1)));
    assert_eq!(m.to_csv().lines().count(), n + 1);
    assert!(kld_matrix(&trials, 0).is_err());
}

proptest! {
    #[test]
    fn symmetric_kl_properties(raw in proptest::collection::vec((0.01f64..1.0, 0.01f64..1.0), 2..20)) {
        let ps: f64 = raw.iter().map(|r| r.0).sum();
        let qs: f64 = raw.iter().map(|r| r.1).sum();
        let p: Vec<f64> = raw.iter().map(|r| r.0 / ps).collect();
        let q: Vec<f64> = raw.iter().map(|r| r.1 / qs).collect();
        let d = symmetric_kl(&p, &q);
        prop_assert!(d >= -1e-12);
        prop_assert!((d - symmetric_kl(&q, &p)).abs() < 1e-12);
        prop_assert!(symmetric_kl(&p, &p).abs() < 1e-12);
    }
}

#[test]
fn folds_partition_the_super_trials() {
    let trials = twenty();
    let folds = split_loso_folds(&trials).unwrap();
    assert_eq!(folds.len(), 5);
    let mut seen = vec![0; trials.len()];
    for f in &folds {
        assert_eq!(f.test.len() + f.train.len(), trials.len());
        for &i in &f.test {
            assert_eq!(trials[i].id.repetition, f.repetition);
            seen[i] += 1;
        }
        assert!(f
            .train
            .iter()
            .all(|&i| trials[i].id.repetition != f.repetition));
    }
    assert!(seen.iter().all(|&c| c == 1));
    let four: Vec<TrialRecord> = trials
        .iter()
        .filter(|t| t.id.repetition != 3)
        .cloned()
        .collect();
    assert!(split_loso_folds(&four).is_err());
}

#[test]
fn setups_partition_instances_into_scopes() {
    let trials = twenty();
    let refs: Vec<&TrialRecord> = trials.iter().collect();
    let tasks = TaskClass::ALL;
    let gestures = GestureClass::MODELED;
    let every = scope_instances(&refs, &Scope::ALL, &gestures).len();
    for (setup, count) in [
        (TrainingSetup::Gsts, 10),
        (TrainingSetup::GstStar, 5),
        (TrainingSetup::GstarTs, 2),
        (TrainingSetup::GstarTstar, 1),
    ] {
        let scopes = setup.scopes(&tasks, &gestures);
        assert_eq!(scopes.len(), count, "{setup}");
        let total: usize = scopes
            .iter()
            .map(|s| scope_instances(&refs, s, &gestures).len())
            .sum();
        assert_eq!(total, every, "{setup}");
        for s in &scopes {
            assert!(setup.validate_scope(s).is_ok());
        }
        assert_eq!(setup.name().parse::<TrainingSetup>().unwrap(), setup);
    }
    assert!(TrainingSetup::Gsts.validate_scope(&Scope::ALL).is_err());
    assert!(TrainingSetup::GstarTstar
        .validate_scope(&Scope {
            task: None,
            gesture: Some(GestureClass::G1)
        })
        .is_err());
}

#[test]
fn stub_detectors_bound_the_harness() {
    let trials = twenty();
    for setup in TrainingSetup::ALL {
        let opts = LosoOptions {
            setup,
            ..LosoOptions::default()
        };
        let oracle = run_loso(&trials, &opts, &OracleStub).unwrap();
        assert_eq!(oracle.metrics.micro_f1, 1.0, "{setup}");
        assert_eq!(oracle.metrics.micro.fp + oracle.metrics.micro.fn_, 0);

        let normal = run_loso(&trials, &opts, &ConstantStub(false)).unwrap();
        assert_eq!(normal.metrics.micro_f1, 0.0);
        assert_eq!(normal.metrics.micro.tp, 0);

        // always erroneous: recall 1, so F1 = 2P / (2P + N)
        let always = run_loso(&trials, &opts, &ConstantStub(true)).unwrap();
        let c = always.metrics.micro;
        let (pos, neg) = (c.tp, c.fp);
        assert_eq!(c.fn_, 0);
        assert_eq!(pos + neg, oracle.metrics.micro.total());
        assert_eq!(
            always.metrics.micro_f1,
            (2 * pos) as f64 / (2 * pos + neg) as f64
        );
    }
}

#[test]
fn loso_is_deterministic_and_independent_of_jobs() {
    let trials = twenty();
    let factory = NetworkFactory {
        config: common::tiny(Architecture::Cnn, 0),
    };
    let opts = LosoOptions {
        seed: 3,
        ..LosoOptions::default()
    };
    let a = run_loso(&trials, &opts, &factory).unwrap();
    let b = run_loso(&trials, &opts, &factory).unwrap();
    let c = run_loso(
        &trials,
        &LosoOptions {
            jobs: 2,
            ..opts.clone()
        },
        &factory,
    )
    .unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.to_csv(), c.to_csv());
    assert_eq!(a.instances_csv(), c.instances_csv());
    assert_eq!(a.windows_csv(), c.windows_csv());
    // a different seed trains different networks
    let d = run_loso(&trials, &LosoOptions { seed: 4, ..opts }, &factory).unwrap();
    assert_ne!(a.windows_csv(), d.windows_csv());

    let nc = run_loso(&trials, &LosoOptions::default(), &NearestCentroidFactory).unwrap();
    assert_eq!(
        nc.to_csv(),
        run_loso(&trials, &LosoOptions::default(), &NearestCentroidFactory)
            .unwrap()
            .to_csv()
    );
}

fn g1_only() -> LosoOptions {
    LosoOptions {
        scope: Some(Scope {
            task: None,
            gesture: Some(GestureClass::G1),
        }),
        ..LosoOptions::default()
    }
}

#[test]
fn tuning_prefers_a_sane_learning_rate() {
    let trials = twenty();
    let train: Vec<&TrialRecord> = trials.iter().filter(|t| t.id.repetition != 1).collect();
    let base = common::tiny(Architecture::Cnn, 2);
    let grid = TuningGrid {
        lrs: vec![1e-2, 10.0],
        batch_sizes: vec![16],
        epochs: vec![4],
    };
    let tuned = nested_tune(&train, &g1_only(), &base, &grid).unwrap();
    assert_eq!(tuned.scores.len(), 2);
    assert_eq!(tuned.best.lr, 1e-2, "{:?}", tuned.scores);

    let empty = TuningGrid {
        lrs: Vec::new(),
        ..grid
    };
    assert!(matches!(
        nested_tune(&train, &g1_only(), &base, &empty),
        Err(EvalError::EmptyGrid)
    ));
}

#[test]
fn tuned_loso_with_a_singleton_grid_matches_plain_loso() {
    let trials = twenty();
    let base = common::tiny(Architecture::Cnn, 2);
    let grid = TuningGrid {
        lrs: vec![base.lr],
        batch_sizes: vec![base.batch_size],
        epochs: vec![base.epochs],
    };
    let (tuned, chosen) = run_loso_tuned(&trials, &g1_only(), &base, &grid).unwrap();
    assert_eq!(chosen.len(), 5);
    assert!(chosen.iter().all(|(_, c)| *c == base));
    let plain = run_loso(&trials, &g1_only(), &NetworkFactory { config: base }).unwrap();
    assert_eq!(tuned.to_csv(), plain.to_csv());
}
